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

#include "msitt/tscodec/codec.hpp"

#include "msitt/common/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>

namespace msitt {

namespace {

// Linear interpolation between order statistics at position q * (n - 1).
double sorted_quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double median_of(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Matrix<double> gaussian(Eigen::Index r, Eigen::Index c, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

nlohmann::json matrix_to_json(const Matrix<double>& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix<double> matrix_from_json(const nlohmann::json& rows, Eigen::Index expect_cols = -1) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : std::max<Eigen::Index>(0, expect_cols);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != c)
      throw ParseError("ragged matrix in codec document");
    for (Eigen::Index j = 0; j < c; ++j)
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
  }
  return m;
}

}  // namespace

bool in_bin_grid(int bins) { return std::find(kBinGrid.begin(), kBinGrid.end(), bins) != kBinGrid.end(); }

BinCodec fit(std::span<const double> values, int bins, const CodecOptions& options) {
  if (bins < 2) throw FitError("bin count must be at least 2, got " + std::to_string(bins));
  for (double v : values)
    if (!std::isfinite(v)) throw DataError("codec fit: non-finite input value");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::set<double> uniq(sorted.begin(), sorted.end());
  if (static_cast<int>(uniq.size()) < bins)
    throw FitError("codec fit: " + std::to_string(uniq.size()) + " distinct values for " + std::to_string(bins) +
                   " bins");

  BinCodec codec;
  codec.bins = bins;
  codec.d_ts = options.d_ts;
  codec.edges.reserve(static_cast<std::size_t>(bins - 1));
  for (int k = 1; k < bins; ++k) {
    double e = sorted_quantile(sorted, static_cast<double>(k) / bins);
    if (!codec.edges.empty() && e <= codec.edges.back()) {
      // Heavy ties collapsed two quantiles; move to the next distinct value.
      auto it = uniq.upper_bound(codec.edges.back());
      if (it == uniq.end()) throw FitError("codec fit: ties leave too few distinct quantiles");
      e = *it;
    }
    codec.edges.push_back(e);
  }

  std::vector<std::vector<double>> members(static_cast<std::size_t>(bins));
  for (double v : sorted) members[static_cast<std::size_t>(encode(codec, v))].push_back(v);
  codec.representatives.resize(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) {
    auto& m = members[static_cast<std::size_t>(k)];
    if (!m.empty()) {
      codec.representatives[static_cast<std::size_t>(k)] = median_of(m);
    } else if (k == 0) {
      codec.representatives[0] = std::nextafter(codec.edges.front(), -std::numeric_limits<double>::infinity());
    } else if (k == bins - 1) {
      codec.representatives[static_cast<std::size_t>(k)] = codec.edges.back();
    } else {
      codec.representatives[static_cast<std::size_t>(k)] =
          0.5 * (codec.edges[static_cast<std::size_t>(k - 1)] + codec.edges[static_cast<std::size_t>(k)]);
    }
  }

  std::mt19937_64 rng(options.seed);
  codec.embedding = gaussian(bins, options.d_ts, 1.0, rng);
  codec.projection = gaussian(options.d_ts, options.d_model, 1.0 / std::sqrt(static_cast<double>(options.d_ts)), rng);
  return codec;
}

int encode(const BinCodec& codec, double v) {
  if (std::isnan(v)) throw DataError("encode: NaN value");
  return static_cast<int>(std::upper_bound(codec.edges.begin(), codec.edges.end(), v) - codec.edges.begin());
}

RowVector<double> embed(const BinCodec& codec, int id) {
  if (id < 0 || id >= codec.bins)
    throw IndexError("embed: bin id " + std::to_string(id) + " outside [0, " + std::to_string(codec.bins) + ")");
  return codec.embedding.row(id) * codec.projection;
}

std::vector<double> occupancy(const BinCodec& codec, std::span<const double> values) {
  std::vector<double> out(static_cast<std::size_t>(codec.bins), 0.0);
  for (double v : values) out[static_cast<std::size_t>(encode(codec, v))] += 1.0;
  for (double& o : out) o /= static_cast<double>(values.size());
  return out;
}

std::vector<double> forward_fill(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  double last = std::numeric_limits<double>::quiet_NaN();
  for (double& v : out) {
    if (std::isnan(v))
      v = last;
    else
      last = v;
  }
  return out;
}

ChannelSet fit_channels(const std::vector<std::pair<std::string, std::vector<double>>>& matrix, int bins,
                        const CodecOptions& options) {
  if (matrix.empty()) throw DataError("fit_channels: no channels");
  if (static_cast<int>(matrix.size()) > kMaxChannels)
    throw DataError("fit_channels: at most " + std::to_string(kMaxChannels) + " channels");
  ChannelSet set;
  std::set<std::string> names;
  for (std::size_t c = 0; c < matrix.size(); ++c) {
    const auto& [name, raw] = matrix[c];
    if (!names.insert(name).second) throw DataError("fit_channels: duplicate channel name " + name);
    std::vector<double> filled = forward_fill(raw);
    std::vector<double> observed;
    observed.reserve(filled.size());
    for (double v : filled)
      if (!std::isnan(v)) observed.push_back(v);
    if (observed.empty()) throw DataError("fit_channels: channel '" + name + "' is entirely missing");
    CodecOptions opt = options;
    opt.seed = options.seed + 1000003ULL * c;
    set.channels.emplace_back(name, fit(observed, bins, opt));
  }
  return set;
}

RowVector<double> embed_day(const ChannelSet& set, std::span<const int> ids) {
  if (static_cast<int>(ids.size()) != set.size()) throw DimensionError("embed_day: one bin id per channel required");
  RowVector<double> out = RowVector<double>::Zero(set.d_model());
  for (int c = 0; c < set.size(); ++c) out += embed(set[c], ids[static_cast<std::size_t>(c)]);
  return out;
}

nlohmann::json to_json(const BinCodec& codec) {
  return nlohmann::json{{"version", kCodecFormatVersion},
                        {"B", codec.bins},
                        {"d_ts", codec.d_ts},
                        {"edges", codec.edges},
                        {"representatives", codec.representatives},
                        {"embedding", matrix_to_json(codec.embedding)},
                        {"projection", matrix_to_json(codec.projection)}};
}

BinCodec codec_from_json(const nlohmann::json& doc) {
  if (doc.value("version", -1) != kCodecFormatVersion)
    throw ParseError("unsupported codec document version");
  BinCodec c;
  c.bins = doc.at("B").get<int>();
  c.d_ts = doc.at("d_ts").get<int>();
  c.edges = doc.at("edges").get<std::vector<double>>();
  c.representatives = doc.at("representatives").get<std::vector<double>>();
  c.embedding = matrix_from_json(doc.at("embedding"));
  c.projection = matrix_from_json(doc.at("projection"));
  if (static_cast<int>(c.edges.size()) != c.bins - 1 || static_cast<int>(c.representatives.size()) != c.bins ||
      c.embedding.rows() != c.bins || c.embedding.cols() != c.d_ts || c.projection.rows() != c.d_ts)
    throw ParseError("codec document has inconsistent extents");
  for (std::size_t k = 1; k < c.edges.size(); ++k)
    if (!(c.edges[k] > c.edges[k - 1])) throw ParseError("codec edges are not strictly ascending");
  return c;
}

nlohmann::json to_json(const ChannelSet& set) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [name, codec] : set.channels) {
    nlohmann::json j = to_json(codec);
    j["name"] = name;
    arr.push_back(std::move(j));
  }
  return arr;
}

ChannelSet channel_set_from_json(const nlohmann::json& doc) {
  ChannelSet set;
  for (const auto& j : doc) set.channels.emplace_back(j.at("name").get<std::string>(), codec_from_json(j));
  return set;
}

void save_codec(const BinCodec& codec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(codec).dump() << "\n";
}

BinCodec load_codec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  return codec_from_json(nlohmann::json::parse(in));
}

}  // namespace msitt
