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

#include "msitt/model/model.hpp"

#include "msitt/common/error.hpp"
#include "msitt/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace msitt {

std::vector<int> successor_rows(const MultimodalSequence& seq, Modality m) {
  std::vector<int> rows;
  for (int i = 0; i + 1 < seq.length(); ++i)
    if (seq.tags[static_cast<std::size_t>(i + 1)] == m) rows.push_back(i);
  return rows;
}

namespace {

template <typename S>
Matrix<S> gaussian(Eigen::Index r, Eigen::Index c, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix<S> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(n(rng));
  return m;
}

template <typename S>
Matrix<S> ones(Eigen::Index c) {
  return Matrix<S>::Ones(1, c);
}

template <typename S>
Matrix<S> zeros(Eigen::Index r, Eigen::Index c) {
  return Matrix<S>::Zero(r, c);
}

std::string layer_name(int l, const char* branch, const char* what) {
  return "L" + std::to_string(l) + "." + branch + "." + what;
}

}  // namespace

template <typename S>
Model<S>::Model(const ModelConfig& config, const ChannelSet* codecs) : config_(config) {
  config_.validate();
  if (codecs != nullptr && codecs->size() != config_.channels)
    throw ContractError("model: codec channel count does not match config");
  build(codecs);
}

template <typename S>
void Model<S>::build(const ChannelSet* codecs) {
  const ModelConfig& c = config_;
  const int d = c.d_model, h = c.hidden();
  std::mt19937_64 rng(c.seed);
  const double sd_in = 1.0 / std::sqrt(static_cast<double>(d));
  const double sd_res = sd_in / std::sqrt(2.0 * c.layers);

  text_emb_ = params_.add("text_emb", gaussian<S>(c.vocab, d, 1.0, rng), ParamGroup::TextEmbedding);

  value_scale_.assign(static_cast<std::size_t>(c.channels), 1.0);
  if (codecs != nullptr)
    for (int ch = 0; ch < c.channels; ++ch) {
      const auto& e = (*codecs)[ch].edges;
      const double spread = e.size() >= 2 ? 0.5 * (e.back() - e.front()) : 0.0;
      value_scale_[static_cast<std::size_t>(ch)] = spread > 0.0 ? 1.0 / spread : 1.0;
    }

  switch (c.ts_embedding) {
    case TsEmbeddingKind::Discrete:
      for (int ch = 0; ch < c.channels; ++ch) {
        Matrix<S> emb, proj;
        if (codecs != nullptr) {
          const BinCodec& bc = (*codecs)[ch];
          if (bc.bins != c.bins || bc.d_ts != c.d_ts || bc.d_model() != d)
            throw ContractError("model: codec extents do not match config");
          emb = bc.embedding.cast<S>();
          proj = bc.projection.cast<S>();
        } else {
          emb = gaussian<S>(c.bins, c.d_ts, 1.0, rng);
          proj = gaussian<S>(c.d_ts, d, 1.0 / std::sqrt(static_cast<double>(c.d_ts)), rng);
        }
        ts_emb_.push_back(params_.add("ts_emb.c" + std::to_string(ch), std::move(emb), ParamGroup::TsEmbedding));
        ts_proj_.push_back(params_.add("ts_proj.c" + std::to_string(ch), std::move(proj), ParamGroup::TsEmbedding));
      }
      break;
    case TsEmbeddingKind::Linear:
      ts_w1_ = params_.add("ts_lin.w", gaussian<S>(c.channels, d, 1.0, rng), ParamGroup::TsEmbedding);
      ts_b1_ = params_.add("ts_lin.b", zeros<S>(1, d), ParamGroup::TsEmbedding);
      break;
    case TsEmbeddingKind::Mlp:
      ts_w1_ = params_.add("ts_mlp.w1", gaussian<S>(c.channels, d, 1.0, rng), ParamGroup::TsEmbedding);
      ts_b1_ = params_.add("ts_mlp.b1", zeros<S>(1, d), ParamGroup::TsEmbedding);
      ts_w2_ = params_.add("ts_mlp.w2", gaussian<S>(d, d, sd_in, rng), ParamGroup::TsEmbedding);
      ts_b2_ = params_.add("ts_mlp.b2", zeros<S>(1, d), ParamGroup::TsEmbedding);
      break;
  }

  const bool own_attn = c.experts == ExpertMode::Separate || c.experts == ExpertMode::SeparateQkv;
  const bool own_mlp = c.experts == ExpertMode::Separate || c.experts == ExpertMode::SeparateMlp;
  const bool own_out = own_attn && !(c.experts == ExpertMode::Separate && c.shared_out_proj);
  for (int l = 0; l < c.layers; ++l) {
    Layer layer;
    Branch& t = layer.text;
    t.ln1_g = params_.add(layer_name(l, "text", "ln1.g"), ones<S>(d), ParamGroup::TextBranch);
    t.ln1_b = params_.add(layer_name(l, "text", "ln1.b"), zeros<S>(1, d), ParamGroup::TextBranch);
    t.qkv.w = params_.add(layer_name(l, "text", "qkv"), gaussian<S>(d, 3 * d, sd_in, rng), ParamGroup::TextBranch);
    t.out.w = params_.add(layer_name(l, "text", "out"), gaussian<S>(d, d, sd_res, rng), ParamGroup::TextBranch);
    t.ln2_g = params_.add(layer_name(l, "text", "ln2.g"), ones<S>(d), ParamGroup::TextBranch);
    t.ln2_b = params_.add(layer_name(l, "text", "ln2.b"), zeros<S>(1, d), ParamGroup::TextBranch);
    t.mlp_in.w = params_.add(layer_name(l, "text", "mlp_in"), gaussian<S>(d, h, sd_in, rng), ParamGroup::TextBranch);
    t.mlp_out.w = params_.add(layer_name(l, "text", "mlp_out"),
                              gaussian<S>(h, d, 1.0 / std::sqrt(static_cast<double>(h) * 2.0 * c.layers), rng),
                              ParamGroup::TextBranch);

    Branch& s = layer.ts;
    s = t;
    auto copy = [&](int src, const char* what) {
      return params_.add(layer_name(l, "ts", what), params_.value(src), ParamGroup::TsBranch);
    };
    if (own_attn) {
      s.ln1_g = copy(t.ln1_g, "ln1.g");
      s.ln1_b = copy(t.ln1_b, "ln1.b");
      s.qkv.w = copy(t.qkv.w, "qkv");
    }
    if (own_out) s.out.w = copy(t.out.w, "out");
    if (own_mlp) {
      s.ln2_g = copy(t.ln2_g, "ln2.g");
      s.ln2_b = copy(t.ln2_b, "ln2.b");
      s.mlp_in.w = copy(t.mlp_in.w, "mlp_in");
      s.mlp_out.w = copy(t.mlp_out.w, "mlp_out");
    }
    layers_.push_back(layer);
  }

  final_text_g_ = params_.add("final.text.g", ones<S>(d), ParamGroup::TextBranch);
  final_text_b_ = params_.add("final.text.b", zeros<S>(1, d), ParamGroup::TextBranch);
  if (c.experts == ExpertMode::Shared) {
    final_ts_g_ = final_text_g_;
    final_ts_b_ = final_text_b_;
  } else {
    final_ts_g_ = params_.add("final.ts.g", ones<S>(d), ParamGroup::TsBranch);
    final_ts_b_ = params_.add("final.ts.b", zeros<S>(1, d), ParamGroup::TsBranch);
  }

  head_text_ = params_.add("head.text", gaussian<S>(d, c.vocab, sd_in, rng), ParamGroup::TextHead);
  if (c.ts_embedding == TsEmbeddingKind::Discrete) {
    for (int ch = 0; ch < c.channels; ++ch)
      head_ts_.push_back(
          params_.add("head.ts.c" + std::to_string(ch), gaussian<S>(d, c.bins, sd_in, rng), ParamGroup::TsHead));
  } else {
    head_ts_reg_ = params_.add("head.ts.reg", gaussian<S>(d, c.channels, sd_in, rng), ParamGroup::TsHead);
  }

  const int ch = c.classifier_hidden;
  cls_w1_ = params_.add("cls.w1", gaussian<S>(d, ch, sd_in, rng), ParamGroup::Classifier);
  cls_b1_ = params_.add("cls.b1", zeros<S>(1, ch), ParamGroup::Classifier);
  cls_w2_ = params_.add("cls.w2", gaussian<S>(ch, 1, 1.0 / std::sqrt(static_cast<double>(ch)), rng),
                        ParamGroup::Classifier);
  cls_b2_ = params_.add("cls.b2", zeros<S>(1, 1), ParamGroup::Classifier);
}

template <typename S>
Var<S> Model<S>::linear(Graph<S>& g, Var<S> x, const Linear& l) const {
  Var<S> y = matmul(x, g.parameter(params_, l.w));
  if (l.lora_a >= 0) {
    Var<S> low = matmul(matmul(x, g.parameter(params_, l.lora_a)), g.parameter(params_, l.lora_b));
    y = add(y, scale(low, static_cast<S>(adapter_scale())));
  }
  return y;
}

template <typename S>
Var<S> Model<S>::embed(Graph<S>& g, const MultimodalSequence& seq, std::span<const int> text_idx,
                       std::span<const int> ts_idx) const {
  const auto L = static_cast<Eigen::Index>(seq.length());
  Var<S> text_x, ts_x;
  if (!text_idx.empty()) {
    std::vector<int> ids;
    ids.reserve(text_idx.size());
    for (int i : text_idx) {
      const int id = seq.ids[static_cast<std::size_t>(i)];
      if (id < 0 || id >= config_.vocab) throw IndexError("model: text id " + std::to_string(id) + " out of range");
      ids.push_back(id);
    }
    text_x = gather_rows(g.parameter(params_, text_emb_), ids);
  }
  if (!ts_idx.empty()) {
    if (seq.channels != config_.channels) throw ContractError("model: sequence channel count does not match config");
    if (config_.ts_embedding == TsEmbeddingKind::Discrete) {
      for (int c = 0; c < config_.channels; ++c) {
        std::vector<int> bins;
        bins.reserve(ts_idx.size());
        for (int i : ts_idx) bins.push_back(seq.bin(i, c));
        Var<S> e = matmul(gather_rows(g.parameter(params_, ts_emb_[static_cast<std::size_t>(c)]), bins),
                          g.parameter(params_, ts_proj_[static_cast<std::size_t>(c)]));
        ts_x = c == 0 ? e : add(ts_x, e);
      }
    } else {
      Matrix<S> v(static_cast<Eigen::Index>(ts_idx.size()), config_.channels);
      for (std::size_t k = 0; k < ts_idx.size(); ++k)
        for (int c = 0; c < config_.channels; ++c)
          v(static_cast<Eigen::Index>(k), c) =
              static_cast<S>(seq.value(ts_idx[k], c) * value_scale_[static_cast<std::size_t>(c)]);
      Var<S> z = add_row(matmul(g.constant(std::move(v)), g.parameter(params_, ts_w1_)), g.parameter(params_, ts_b1_));
      if (config_.ts_embedding == TsEmbeddingKind::Mlp)
        z = add_row(matmul(silu(z), g.parameter(params_, ts_w2_)), g.parameter(params_, ts_b2_));
      ts_x = z;
    }
  }
  if (ts_idx.empty()) return text_x;
  if (text_idx.empty()) return ts_x;
  return merge_rows(text_x, text_idx, ts_x, ts_idx, L);
}

template <typename S>
ForwardResult<S> Model<S>::forward(Graph<S>& g, const MultimodalSequence& seq, const MaskPair& masks,
                                   const ForwardOptions& options) const {
  const int L = seq.length();
  if (L == 0) throw ContractError("model: empty sequence");
  if (static_cast<int>(seq.tags.size()) != L || static_cast<int>(seq.positions.size()) != L)
    throw ContractError("model: sequence arrays are inconsistent");
  if (masks.lower.rows() != L || masks.lower.cols() != L || masks.upper.rows() != L || masks.upper.cols() != L)
    throw ContractError("model: mask extent does not match the sequence");
  std::vector<int> text_idx, ts_idx;
  for (int i = 0; i < L; ++i) (seq.is_text(i) ? text_idx : ts_idx).push_back(i);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      const bool causal = j <= i;
      const bool same = seq.tags[static_cast<std::size_t>(i)] == seq.tags[static_cast<std::size_t>(j)];
      if (masks.upper(i, j) != causal || masks.lower(i, j) != (causal && same))
        throw ContractError("model: masks do not match the sequence tags");
    }

  auto route = [&](Var<S> x, auto&& fn) -> Var<S> {
    if (ts_idx.empty()) return fn(x, true);
    if (text_idx.empty()) return fn(x, false);
    Var<S> a = fn(gather_rows(x, text_idx), true);
    Var<S> b = fn(gather_rows(x, ts_idx), false);
    return merge_rows(a, text_idx, b, ts_idx, static_cast<Eigen::Index>(L));
  };
  auto P = [&](int id) { return g.parameter(params_, id); };
  const int d = config_.d_model;
  const bool drop = options.rng != nullptr && config_.dropout > 0.0;

  ForwardResult<S> r;
  Var<S> x = embed(g, seq, text_idx, ts_idx);
  for (int l = 0; l < config_.layers; ++l) {
    const Layer& layer = layers_[static_cast<std::size_t>(l)];
    const Mask& mask = config_.cross_modal(l + 1) ? masks.upper : masks.lower;
    Var<S> qkv = route(x, [&](Var<S> in, bool text) {
      const Branch& b = text ? layer.text : layer.ts;
      return linear(g, layernorm(in, P(b.ln1_g), P(b.ln1_b)), b.qkv);
    });
    Var<S> q = rope(slice_cols(qkv, 0, d), seq.positions, config_.heads, config_.rotary_base);
    Var<S> k = rope(slice_cols(qkv, d, d), seq.positions, config_.heads, config_.rotary_base);
    Var<S> v = slice_cols(qkv, 2 * d, d);
    Var<S> att = attention(q, k, v, mask, config_.heads);
    Var<S> o = route(att, [&](Var<S> in, bool text) { return linear(g, in, (text ? layer.text : layer.ts).out); });
    if (drop) o = dropout(o, config_.dropout, *options.rng);
    x = add(x, o);
    Var<S> m = route(x, [&](Var<S> in, bool text) {
      const Branch& b = text ? layer.text : layer.ts;
      return linear(g, silu(linear(g, layernorm(in, P(b.ln2_g), P(b.ln2_b)), b.mlp_in)), b.mlp_out);
    });
    if (drop) m = dropout(m, config_.dropout, *options.rng);
    x = add(x, m);
    if (options.keep_layers) r.layers.push_back(x);
  }
  r.hidden = route(x, [&](Var<S> in, bool text) {
    return text ? layernorm(in, P(final_text_g_), P(final_text_b_)) : layernorm(in, P(final_ts_g_), P(final_ts_b_));
  });

  if (!options.heads) return r;
  r.text_rows = options.text_rows ? *options.text_rows : successor_rows(seq, Modality::Text);
  r.ts_rows = options.ts_rows ? *options.ts_rows : successor_rows(seq, Modality::Ts);
  if (!r.text_rows.empty()) r.text_logits = matmul(gather_rows(r.hidden, r.text_rows), P(head_text_));
  if (!r.ts_rows.empty()) {
    Var<S> hs = gather_rows(r.hidden, r.ts_rows);
    if (config_.ts_embedding == TsEmbeddingKind::Discrete) {
      for (int hid : head_ts_) r.ts_logits.push_back(matmul(hs, P(hid)));
    } else {
      r.ts_values = matmul(hs, P(head_ts_reg_));
    }
  }
  return r;
}

template <typename S>
Var<S> Model<S>::classifier_logit(Graph<S>& g, const ForwardResult<S>& f, const MultimodalSequence& seq) const {
  if (!seq.ends_with_eos()) throw ContractError("classify: sequence does not end with <eos>");
  const int last = seq.length() - 1;
  const std::vector<int> row{last};
  Var<S> h = gather_rows(f.hidden, row);
  Var<S> z = tanh(add_row(matmul(h, g.parameter(params_, cls_w1_)), g.parameter(params_, cls_b1_)));
  return add_row(matmul(z, g.parameter(params_, cls_w2_)), g.parameter(params_, cls_b2_));
}

template <typename S>
double Model<S>::classify(const MultimodalSequence& seq) const {
  if (!seq.ends_with_eos()) throw ContractError("classify: sequence does not end with <eos>");
  Graph<S> g(false);
  ForwardOptions opt;
  opt.heads = false;
  const auto f = forward(g, seq, build_masks(seq), opt);
  const double z = static_cast<double>(classifier_logit(g, f, seq).scalar());
  return 1.0 / (1.0 + std::exp(-z));
}

template <typename S>
void Model<S>::apply_adapters(int rank, AdapterTarget target) {
  if (adapter_rank_ > 0) throw ContractError("adapters already applied");
  if (std::find(kAdapterRanks.begin(), kAdapterRanks.end(), rank) == kAdapterRanks.end())
    throw ContractError("adapter rank " + std::to_string(rank) + " outside {16, 32, 64}");
  std::mt19937_64 rng(config_.seed ^ 0xada7e5ULL);
  const char* tag = target == AdapterTarget::TsBranch ? "ts" : "text";
  for (int l = 0; l < config_.layers; ++l) {
    Layer& layer = layers_[static_cast<std::size_t>(l)];
    Branch& mine = target == AdapterTarget::TsBranch ? layer.ts : layer.text;
    Branch& other = target == AdapterTarget::TsBranch ? layer.text : layer.ts;
    auto adapt = [&](Linear Branch::*member, const char* what) {
      Linear& lin = mine.*member;
      const Matrix<S>& w = params_.value(lin.w);
      const std::string base = layer_name(l, tag, what);
      lin.lora_a = params_.add(base + ".lora_a", zeros<S>(w.rows(), rank), ParamGroup::Adapter);
      lin.lora_b = params_.add(base + ".lora_b", gaussian<S>(rank, w.cols(), 1.0 / std::sqrt(static_cast<double>(rank)), rng),
                               ParamGroup::Adapter);
      params_.set_trainable(lin.w, false);
      Linear& twin = other.*member;
      if (twin.w == lin.w) twin = lin;
    };
    adapt(&Branch::qkv, "qkv");
    adapt(&Branch::out, "out");
    adapt(&Branch::mlp_in, "mlp_in");
    adapt(&Branch::mlp_out, "mlp_out");
  }
  // Norms of the adapted branch stay fixed; the low-rank terms carry the update.
  params_.set_group_trainable(target == AdapterTarget::TsBranch ? ParamGroup::TsBranch : ParamGroup::TextBranch, false);
  adapter_rank_ = rank;
  adapter_target_ = target;
}

template <typename S>
void Model<S>::freeze_text() {
  params_.set_group_trainable(ParamGroup::TextBranch, false);
  params_.set_group_trainable(ParamGroup::TextEmbedding, false);
  params_.set_group_trainable(ParamGroup::TextHead, false);
}

template <typename S>
void Model<S>::mirror_text_to_ts() {
  auto copy = [&](int dst, int src) {
    if (dst != src) params_.value(dst) = params_.value(src);
  };
  for (const Layer& layer : layers_) {
    copy(layer.ts.ln1_g, layer.text.ln1_g);
    copy(layer.ts.ln1_b, layer.text.ln1_b);
    copy(layer.ts.qkv.w, layer.text.qkv.w);
    copy(layer.ts.out.w, layer.text.out.w);
    copy(layer.ts.ln2_g, layer.text.ln2_g);
    copy(layer.ts.ln2_b, layer.text.ln2_b);
    copy(layer.ts.mlp_in.w, layer.text.mlp_in.w);
    copy(layer.ts.mlp_out.w, layer.text.mlp_out.w);
  }
  copy(final_ts_g_, final_text_g_);
  copy(final_ts_b_, final_text_b_);
}

template <typename S>
std::size_t Model<S>::ts_branch_count() const {
  std::size_t n = 0;
  for (int i = 0; i < params_.size(); ++i)
    if (params_.group(i) == ParamGroup::TsBranch) n += static_cast<std::size_t>(params_.value(i).size());
  return n;
}

template <typename S>
nlohmann::json Model<S>::to_json() const {
  nlohmann::json tensors = nlohmann::json::array();
  for (int i = 0; i < params_.size(); ++i) {
    const Matrix<S>& v = params_.value(i);
    std::vector<double> data(v.data(), v.data() + v.size());
    tensors.push_back({{"name", params_.name(i)},
                       {"group", std::string(to_string(params_.group(i)))},
                       {"trainable", params_.trainable(i)},
                       {"rows", v.rows()},
                       {"cols", v.cols()},
                       {"data", std::move(data)}});
  }
  return nlohmann::json{{"format", "msitt-model"},
                        {"version", 1},
                        {"config", config_.to_json()},
                        {"adapter_rank", adapter_rank_},
                        {"adapter_target", adapter_target_ == AdapterTarget::TsBranch ? "ts" : "text"},
                        {"value_scale", value_scale_},
                        {"tensors", std::move(tensors)}};
}

template <typename S>
Model<S> Model<S>::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "msitt-model" || j.value("version", 0) != 1)
    throw ParseError("not a version-1 model document");
  Model m(ModelConfig::from_json(j.at("config")));
  const int rank = j.value("adapter_rank", 0);
  if (rank > 0)
    m.apply_adapters(rank, j.value("adapter_target", std::string("ts")) == "ts" ? AdapterTarget::TsBranch
                                                                                  : AdapterTarget::TextBranch);
  m.value_scale_ = j.at("value_scale").get<std::vector<double>>();
  const auto& tensors = j.at("tensors");
  if (static_cast<int>(tensors.size()) != m.params_.size()) throw ParseError("model document tensor count mismatch");
  for (const auto& t : tensors) {
    const int id = m.params_.find(t.at("name").get<std::string>());
    if (id < 0) throw ParseError("model document names unknown tensor " + t.at("name").get<std::string>());
    Matrix<S>& v = m.params_.value(id);
    if (t.at("rows").get<Eigen::Index>() != v.rows() || t.at("cols").get<Eigen::Index>() != v.cols())
      throw ParseError("tensor " + m.params_.name(id) + " has the wrong shape");
    const auto data = t.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != v.size()) throw ParseError("tensor data size mismatch");
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<S>(data[static_cast<std::size_t>(i)]);
    m.params_.set_trainable(id, t.at("trainable").get<bool>());
  }
  return m;
}

template <typename S>
void Model<S>::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json().dump();
}

template <typename S>
Model<S> Model<S>::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  return from_json(nlohmann::json::parse(in));
}

template class Model<float>;
template class Model<double>;

}  // namespace msitt
