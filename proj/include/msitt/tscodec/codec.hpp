/*
 * Copyright 2026 The msitt Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "msitt/numcore/tensor.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace msitt {

/// Tuning grids exposed for bin count and bin-embedding width.
inline constexpr std::array<int, 5> kBinGrid{4, 8, 16, 32, 64};
inline constexpr std::array<int, 5> kTsEmbeddingGrid{32, 64, 128, 256, 512};
inline constexpr int kMaxChannels = 15;
inline constexpr int kCodecFormatVersion = 1;

bool in_bin_grid(int bins);

/// Quantile discretizer for one channel plus its bin embedding table and the
/// linear map from bin-embedding width to model width.
///
/// Bin k covers [edges[k-1], edges[k]) with the outer bins unbounded; a value
/// that lands exactly on an edge belongs to the higher bin.
struct BinCodec {
  int bins = 0;
  int d_ts = 0;
  std::vector<double> edges;            // bins - 1, strictly ascending
  std::vector<double> representatives;  // per-bin median of the fitting data
  Matrix<double> embedding;             // bins x d_ts
  Matrix<double> projection;            // d_ts x d_model

  int d_model() const { return static_cast<int>(projection.cols()); }
};

struct CodecOptions {
  int d_ts = 32;
  int d_model = 128;
  std::uint64_t seed = 0;
};

/// Fits edges at the empirical k/bins quantiles of `values` (training split
/// only). Throws DataError on non-finite input, FitError when fewer than
/// `bins` distinct values are present.
BinCodec fit(std::span<const double> values, int bins, const CodecOptions& options = {});

/// Bin id in [0, bins); monotone non-decreasing in v. NaN throws DataError.
int encode(const BinCodec& codec, double v);

/// projection^T applied to embedding[id]: a 1 x d_model row.
RowVector<double> embed(const BinCodec& codec, int id);

/// Per-bin occupancy fraction of `values` under the codec.
std::vector<double> occupancy(const BinCodec& codec, std::span<const double> values);

struct ChannelSet {
  std::vector<std::pair<std::string, BinCodec>> channels;

  int size() const { return static_cast<int>(channels.size()); }
  const BinCodec& operator[](int c) const { return channels.at(static_cast<std::size_t>(c)).second; }
  const std::string& name(int c) const { return channels.at(static_cast<std::size_t>(c)).first; }
  int d_model() const { return channels.empty() ? 0 : channels.front().second.d_model(); }
};

/// NaN marks a missing observation. Each missing value takes the last
/// observed one; leading missing values stay NaN (those days are dropped).
std::vector<double> forward_fill(std::span<const double> values);

/// One independent codec per channel, fitted after forward-fill. All
/// channels share d_model. Throws DataError naming an entirely-missing channel.
ChannelSet fit_channels(const std::vector<std::pair<std::string, std::vector<double>>>& matrix, int bins,
                        const CodecOptions& options = {});

/// Embedding of one day's multivariate token: the per-channel bin embeddings
/// stacked and mapped to d_model. Stacking then one projection equals the sum
/// of per-channel projections, which is how it is computed.
RowVector<double> embed_day(const ChannelSet& set, std::span<const int> ids);

nlohmann::json to_json(const BinCodec& codec);
BinCodec codec_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ChannelSet& set);
ChannelSet channel_set_from_json(const nlohmann::json& doc);

void save_codec(const BinCodec& codec, const std::filesystem::path& path);
BinCodec load_codec(const std::filesystem::path& path);

}  // namespace msitt
