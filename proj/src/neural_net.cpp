// SPDX-License-Identifier: Apache-2.0
#include "seqgen/neural_net.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "seqgen/error.hpp"
#include "seqgen/logmath.hpp"
#include "seqgen/rng.hpp"

namespace seqgen {

using Eigen::VectorXd;
using ConstMat = Eigen::Map<const RowMatrix>;
using ConstVec = Eigen::Map<const VectorXd>;
using MutMat = Eigen::Map<RowMatrix>;
using MutVec = Eigen::Map<VectorXd>;

const char* to_string(AttentionMode mode) {
  return mode == AttentionMode::kSourceOnly ? "source_only" : "source_and_target";
}

AttentionMode attention_mode_from_string(const std::string& s) {
  if (s == "source_only") return AttentionMode::kSourceOnly;
  if (s == "source_and_target") return AttentionMode::kSourceAndTarget;
  throw InvalidInput("unknown attention mode '" + s + "'");
}

void ModelConfig::validate() const {
  if (vocab_size == 0 || embed_dim == 0 || hidden_dim == 0 || num_layers == 0)
    throw InvalidInput("model config: all dimensions must be >= 1");
  if (num_layers > 2) throw InvalidInput("model config: at most 2 recurrent layers");
}

// ---------------------------------------------------------------------------
// ParamSet

void ParamSet::add(std::string name, std::vector<std::uint32_t> shape) {
  if (contains(name)) throw InvalidInput("duplicate parameter name " + name);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  tensors_.push_back(Tensor{std::move(name), std::move(shape), std::vector<double>(n, 0.0)});
}

bool ParamSet::contains(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return true;
  return false;
}

Tensor& ParamSet::at(const std::string& name) {
  for (auto& t : tensors_)
    if (t.name == name) return t;
  throw DimensionMismatch("no parameter named " + name);
}

const Tensor& ParamSet::at(const std::string& name) const {
  return const_cast<ParamSet*>(this)->at(name);
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

double& ParamSet::flat(std::size_t index) {
  for (auto& t : tensors_) {
    if (index < t.size()) return t.data[index];
    index -= t.size();
  }
  throw DimensionMismatch("flat parameter index out of range");
}

double ParamSet::flat(std::size_t index) const { return const_cast<ParamSet*>(this)->flat(index); }

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& t : tensors_) out.add(t.name, t.shape);
  return out;
}

bool ParamSet::all_finite() const {
  for (const auto& t : tensors_)
    for (double x : t.data)
      if (!std::isfinite(x)) return false;
  return true;
}

bool ParamSet::same_shapes(const ParamSet& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (tensors_[i].name != other.tensors_[i].name || tensors_[i].shape != other.tensors_[i].shape)
      return false;
  return true;
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (!same_shapes(other)) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i].data;
    const auto& b = other.tensors_[i].data;
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

namespace {

std::pair<Eigen::Index, Eigen::Index> rows_cols(const Tensor& t) {
  if (t.shape.size() == 1) return {t.shape[0], 1};
  if (t.shape.size() == 2) return {t.shape[0], t.shape[1]};
  throw DimensionMismatch("tensor " + t.name + " is not a matrix");
}

std::string layer_name(const char* prefix, std::size_t layer, const char* suffix) {
  return std::string(prefix) + ".l" + std::to_string(layer) + "." + suffix;
}

}  // namespace

Eigen::Map<RowMatrix> ParamSet::matrix(const std::string& name) {
  auto& t = at(name);
  auto [r, c] = rows_cols(t);
  return {t.data.data(), r, c};
}

Eigen::Map<const RowMatrix> ParamSet::matrix(const std::string& name) const {
  const auto& t = at(name);
  auto [r, c] = rows_cols(t);
  return {t.data.data(), r, c};
}

Eigen::Map<VectorXd> ParamSet::vector(const std::string& name) {
  auto& t = at(name);
  return {t.data.data(), static_cast<Eigen::Index>(t.size())};
}

Eigen::Map<const VectorXd> ParamSet::vector(const std::string& name) const {
  const auto& t = at(name);
  return {t.data.data(), static_cast<Eigen::Index>(t.size())};
}

ParamSet make_param_schema(const ModelConfig& cfg) {
  cfg.validate();
  const auto V = static_cast<std::uint32_t>(cfg.vocab_size);
  const auto E = static_cast<std::uint32_t>(cfg.embed_dim);
  const auto H = static_cast<std::uint32_t>(cfg.hidden_dim);
  ParamSet p;
  p.add("embed", {V, E});
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const std::uint32_t in = l == 0 ? E : H;
    p.add(layer_name("enc", l, "W"), {4 * H, in + H});
    p.add(layer_name("enc", l, "b"), {4 * H});
  }
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const std::uint32_t in = l == 0 ? E + H : H;
    p.add(layer_name("dec", l, "W"), {4 * H, in + H});
    p.add(layer_name("dec", l, "b"), {4 * H});
  }
  p.add("att.Wq", {H, H});
  p.add("att.Wm", {H, H});
  p.add("att.v", {H});
  p.add("out.W", {V, 2 * H});
  p.add("out.b", {V});
  return p;
}

ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ParamSet p = make_param_schema(cfg);
  Rng rng(seed);
  for (auto& t : p.tensors())
    for (double& x : t.data) x = static_cast<float>(-0.08 + 0.16 * rng.uniform01());
  return p;
}

void check_params(const ModelConfig& cfg, const ParamSet& params) {
  if (!make_param_schema(cfg).same_shapes(params))
    throw DimensionMismatch("parameter set does not match the model configuration");
}

// ---------------------------------------------------------------------------
// Shared math

namespace {

VectorXd sigmoid(const VectorXd& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

VectorXd softmax(const VectorXd& logits) {
  VectorXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

struct LstmWeights {
  ConstMat W;
  ConstVec b;
};

struct Weights {
  ConstMat embed;
  std::vector<LstmWeights> enc;
  std::vector<LstmWeights> dec;
  ConstMat att_Wq;
  ConstMat att_Wm;
  ConstVec att_v;
  ConstMat out_W;
  ConstVec out_b;

  Weights(const ParamSet& p, std::size_t layers)
      : embed(p.matrix("embed")),
        att_Wq(p.matrix("att.Wq")),
        att_Wm(p.matrix("att.Wm")),
        att_v(p.vector("att.v")),
        out_W(p.matrix("out.W")),
        out_b(p.vector("out.b")) {
    for (std::size_t l = 0; l < layers; ++l) {
      enc.push_back({p.matrix(layer_name("enc", l, "W")), p.vector(layer_name("enc", l, "b"))});
      dec.push_back({p.matrix(layer_name("dec", l, "W")), p.vector(layer_name("dec", l, "b"))});
    }
  }
};

struct LstmGrads {
  MutMat W;
  MutVec b;
};

struct Grads {
  MutMat embed;
  std::vector<LstmGrads> enc;
  std::vector<LstmGrads> dec;
  MutMat att_Wq;
  MutMat att_Wm;
  MutVec att_v;
  MutMat out_W;
  MutVec out_b;

  Grads(ParamSet& p, std::size_t layers)
      : embed(p.matrix("embed")),
        att_Wq(p.matrix("att.Wq")),
        att_Wm(p.matrix("att.Wm")),
        att_v(p.vector("att.v")),
        out_W(p.matrix("out.W")),
        out_b(p.vector("out.b")) {
    for (std::size_t l = 0; l < layers; ++l) {
      enc.push_back({p.matrix(layer_name("enc", l, "W")), p.vector(layer_name("enc", l, "b"))});
      dec.push_back({p.matrix(layer_name("dec", l, "W")), p.vector(layer_name("dec", l, "b"))});
    }
  }
};

struct LstmCache {
  VectorXd xh;  // [x; h_prev]
  VectorXd c_prev;
  VectorXd i, f, g, o;
  VectorXd c, tc, h;
};

void lstm_forward(const LstmWeights& w, const VectorXd& x, const VectorXd& h_prev,
                  const VectorXd& c_prev, LstmCache& k) {
  const Eigen::Index H = h_prev.size();
  k.xh.resize(x.size() + H);
  k.xh << x, h_prev;
  VectorXd z = w.W * k.xh + w.b;
  k.i = sigmoid(z.segment(0, H));
  k.f = sigmoid(z.segment(H, H));
  k.g = z.segment(2 * H, H).array().tanh().matrix();
  k.o = sigmoid(z.segment(3 * H, H));
  k.c_prev = c_prev;
  k.c = k.f.cwiseProduct(c_prev) + k.i.cwiseProduct(k.g);
  k.tc = k.c.array().tanh().matrix();
  k.h = k.o.cwiseProduct(k.tc);
}

/// dh, dc: gradients w.r.t. this step's outputs. On return they hold the
/// gradients w.r.t. h_prev and c_prev; dx receives the input gradient.
void lstm_backward(const LstmWeights& w, LstmGrads& gw, const LstmCache& k, VectorXd& dh,
                   VectorXd& dc, VectorXd& dx) {
  const Eigen::Index H = k.h.size();
  VectorXd d_o = dh.cwiseProduct(k.tc);
  VectorXd dct = dc + dh.cwiseProduct(k.o).cwiseProduct((1.0 - k.tc.array().square()).matrix());
  VectorXd dz(4 * H);
  dz.segment(0, H) = dct.cwiseProduct(k.g).cwiseProduct(k.i.cwiseProduct((1.0 - k.i.array()).matrix()));
  dz.segment(H, H) =
      dct.cwiseProduct(k.c_prev).cwiseProduct(k.f.cwiseProduct((1.0 - k.f.array()).matrix()));
  dz.segment(2 * H, H) = dct.cwiseProduct(k.i).cwiseProduct((1.0 - k.g.array().square()).matrix());
  dz.segment(3 * H, H) = d_o.cwiseProduct(k.o.cwiseProduct((1.0 - k.o.array()).matrix()));
  gw.W.noalias() += dz * k.xh.transpose();
  gw.b += dz;
  VectorXd dxh = w.W.transpose() * dz;
  const Eigen::Index in = dxh.size() - H;
  dx = dxh.head(in);
  dh = dxh.tail(H);
  dc = dct.cwiseProduct(k.f);
}

VectorXd embed_row(const Weights& w, TokenId t) { return w.embed.row(t).transpose(); }

}  // namespace

// ---------------------------------------------------------------------------
// Stepwise inference API

std::pair<AttentionMemory, DecoderState> encode(const ParamSet& params, const ModelConfig& cfg,
                                                std::span<const TokenId> input) {
  if (input.empty()) throw DimensionMismatch("encode: empty input");
  check_ids(input, cfg.vocab_size);
  const Weights w(params, cfg.num_layers);
  const auto H = static_cast<Eigen::Index>(cfg.hidden_dim);
  DecoderState state;
  state.h.assign(cfg.num_layers, VectorXd::Zero(H));
  state.c.assign(cfg.num_layers, VectorXd::Zero(H));
  AttentionMemory memory;
  LstmCache k;
  for (TokenId t : input) {
    VectorXd x = embed_row(w, t);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      lstm_forward(w.enc[l], x, state.h[l], state.c[l], k);
      state.h[l] = k.h;
      state.c[l] = k.c;
      x = k.h;
    }
    memory.append(x, MemoryOrigin::kSource);
  }
  if (!cfg.carry_encoder_state) {
    for (auto& h : state.h) h.setZero();
    for (auto& c : state.c) c.setZero();
  }
  state.step = 0;
  return {std::move(memory), std::move(state)};
}

std::vector<double> attention_weights(const ParamSet& params, const DecoderState& h_prev,
                                      const AttentionMemory& memory) {
  if (memory.size() == 0) throw DimensionMismatch("attention: empty memory");
  const auto Wq = params.matrix("att.Wq");
  const auto Wm = params.matrix("att.Wm");
  const auto v = params.vector("att.v");
  if (h_prev.top().size() != Wq.cols()) throw DimensionMismatch("attention: query size");
  const VectorXd q = Wq * h_prev.top();
  VectorXd scores(static_cast<Eigen::Index>(memory.size()));
  for (std::size_t j = 0; j < memory.size(); ++j) {
    if (memory.rows[j].size() != Wm.cols()) throw DimensionMismatch("attention: memory row size");
    scores[static_cast<Eigen::Index>(j)] = v.dot((q + Wm * memory.rows[j]).array().tanh().matrix());
  }
  VectorXd w = softmax(scores);
  return {w.data(), w.data() + w.size()};
}

VectorXd attention(const ParamSet& params, const DecoderState& h_prev,
                   const AttentionMemory& memory) {
  const auto w = attention_weights(params, h_prev, memory);
  VectorXd ctx = VectorXd::Zero(memory.rows.front().size());
  for (std::size_t j = 0; j < memory.size(); ++j) ctx += w[j] * memory.rows[j];
  return ctx;
}

StepOutput decode_step(const ParamSet& params, const ModelConfig& cfg, const DecoderState& state,
                       TokenId prev_token, const AttentionMemory& memory) {
  if (prev_token >= cfg.vocab_size) throw DimensionMismatch("decode_step: token out of range");
  if (state.h.size() != cfg.num_layers || state.c.size() != cfg.num_layers)
    throw DimensionMismatch("decode_step: state has wrong layer count");
  const Weights w(params, cfg.num_layers);
  const VectorXd ctx = attention(params, state, memory);
  VectorXd x(static_cast<Eigen::Index>(cfg.embed_dim + cfg.hidden_dim));
  x << embed_row(w, prev_token), ctx;
  StepOutput out;
  out.state.h.resize(cfg.num_layers);
  out.state.c.resize(cfg.num_layers);
  LstmCache k;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    lstm_forward(w.dec[l], x, state.h[l], state.c[l], k);
    out.state.h[l] = k.h;
    out.state.c[l] = k.c;
    x = k.h;
  }
  out.state.step = state.step + 1;
  VectorXd features(2 * ctx.size());
  features << x, ctx;
  const VectorXd p = softmax(w.out_W * features + w.out_b);
  out.probs.assign(p.data(), p.data() + p.size());
  return out;
}

// ---------------------------------------------------------------------------
// Teacher-forced forward / backward

namespace {

struct AttentionCache {
  VectorXd query;
  RowMatrix act;  // rows: tanh(Wq q + Wm m_j)
  VectorXd weights;
  VectorXd context;
};

struct ExampleCache {
  std::vector<std::vector<LstmCache>> enc;  // [layer][t]
  std::vector<VectorXd> enc_proj;           // Wm * annotation_t
  std::vector<std::vector<LstmCache>> dec;  // [layer][t]
  std::vector<VectorXd> dec_proj;           // Wm * decoder top h_t
  std::vector<AttentionCache> att;
  std::vector<VectorXd> features;  // [h_t; ctx_t]
  std::vector<VectorXd> log_probs;
  std::vector<VectorXd> init_h, init_c;
};

const VectorXd& memory_row(const ExampleCache& k, std::size_t layers, std::size_t j) {
  const std::size_t m = k.enc_proj.size();
  return j < m ? k.enc[layers - 1][j].h : k.dec[layers - 1][j - m].h;
}

const VectorXd& memory_proj(const ExampleCache& k, std::size_t j) {
  const std::size_t m = k.enc_proj.size();
  return j < m ? k.enc_proj[j] : k.dec_proj[j - m];
}

void forward_example(const Weights& w, const ModelConfig& cfg, const TrainingExample& ex,
                     ExampleCache& k) {
  const std::size_t L = cfg.num_layers;
  const auto H = static_cast<Eigen::Index>(cfg.hidden_dim);
  const std::size_t M = ex.encoder_input.size();
  const std::size_t T = ex.decoder_input.size();
  const bool target_attention = cfg.attention == AttentionMode::kSourceAndTarget;

  k.enc.assign(L, std::vector<LstmCache>(M));
  std::vector<VectorXd> h(L, VectorXd::Zero(H)), c(L, VectorXd::Zero(H));
  for (std::size_t t = 0; t < M; ++t) {
    VectorXd x = embed_row(w, ex.encoder_input[t]);
    for (std::size_t l = 0; l < L; ++l) {
      lstm_forward(w.enc[l], x, h[l], c[l], k.enc[l][t]);
      h[l] = k.enc[l][t].h;
      c[l] = k.enc[l][t].c;
      x = h[l];
    }
  }
  k.enc_proj.resize(M);
  for (std::size_t t = 0; t < M; ++t) k.enc_proj[t] = w.att_Wm * k.enc[L - 1][t].h;

  if (!cfg.carry_encoder_state) {
    for (auto& v : h) v.setZero();
    for (auto& v : c) v.setZero();
  }
  k.init_h = h;
  k.init_c = c;

  k.dec.assign(L, std::vector<LstmCache>(T));
  k.dec_proj.clear();
  k.att.assign(T, {});
  k.features.assign(T, {});
  k.log_probs.assign(T, {});
  for (std::size_t t = 0; t < T; ++t) {
    AttentionCache& a = k.att[t];
    a.query = h[L - 1];
    const VectorXd q = w.att_Wq * a.query;
    const std::size_t rows = M + (target_attention ? t : 0);
    a.act.resize(static_cast<Eigen::Index>(rows), H);
    VectorXd scores(static_cast<Eigen::Index>(rows));
    for (std::size_t j = 0; j < rows; ++j) {
      a.act.row(static_cast<Eigen::Index>(j)) = (q + memory_proj(k, j)).array().tanh().matrix().transpose();
      scores[static_cast<Eigen::Index>(j)] = a.act.row(static_cast<Eigen::Index>(j)).dot(w.att_v);
    }
    a.weights = softmax(scores);
    a.context = VectorXd::Zero(H);
    for (std::size_t j = 0; j < rows; ++j)
      a.context += a.weights[static_cast<Eigen::Index>(j)] * memory_row(k, L, j);

    VectorXd x(static_cast<Eigen::Index>(cfg.embed_dim) + H);
    x << embed_row(w, ex.decoder_input[t]), a.context;
    for (std::size_t l = 0; l < L; ++l) {
      lstm_forward(w.dec[l], x, h[l], c[l], k.dec[l][t]);
      h[l] = k.dec[l][t].h;
      c[l] = k.dec[l][t].c;
      x = h[l];
    }
    if (target_attention) k.dec_proj.push_back(w.att_Wm * h[L - 1]);
    k.features[t].resize(2 * H);
    k.features[t] << h[L - 1], a.context;
    VectorXd logits = w.out_W * k.features[t] + w.out_b;
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    k.log_probs[t] = (logits.array() - lse).matrix();
  }
}

void check_example(const ModelConfig& cfg, const TrainingExample& ex) {
  if (ex.encoder_input.empty()) throw DimensionMismatch("example: empty encoder input");
  if (ex.decoder_input.size() != ex.decoder_output.size())
    throw DimensionMismatch("example: decoder input/output lengths differ");
  check_ids(ex.encoder_input, cfg.vocab_size);
  check_ids(ex.decoder_input, cfg.vocab_size);
  check_ids(ex.decoder_output, cfg.vocab_size);
}

/// Accumulates scale * d(-sum log p)/d(params) into g.
void backward_example(const Weights& w, Grads& g, const ModelConfig& cfg,
                      const TrainingExample& ex, const ExampleCache& k, double scale) {
  const std::size_t L = cfg.num_layers;
  const auto H = static_cast<Eigen::Index>(cfg.hidden_dim);
  const auto E = static_cast<Eigen::Index>(cfg.embed_dim);
  const std::size_t M = ex.encoder_input.size();
  const std::size_t T = ex.decoder_input.size();
  const bool target_attention = cfg.attention == AttentionMode::kSourceAndTarget;

  std::vector<VectorXd> d_ann(M, VectorXd::Zero(H));       // annotation rows
  std::vector<VectorXd> d_enc_proj(M, VectorXd::Zero(H));  // Wm * annotation
  std::vector<VectorXd> d_top(T, VectorXd::Zero(H));       // decoder top h_t (non-recurrent)
  std::vector<VectorXd> d_dec_proj(target_attention ? T : 0, VectorXd::Zero(H));
  VectorXd d_init_top = VectorXd::Zero(H);
  std::vector<VectorXd> dh(L, VectorXd::Zero(H)), dc(L, VectorXd::Zero(H));
  VectorXd dx;

  for (std::size_t ti = T; ti-- > 0;) {
    // The top state of step ti is memory row M+ti for every later step.
    if (target_attention) {
      d_top[ti].noalias() += w.att_Wm.transpose() * d_dec_proj[ti];
      g.att_Wm.noalias() += d_dec_proj[ti] * k.dec[L - 1][ti].h.transpose();
    }

    VectorXd dlogits = k.log_probs[ti].array().exp().matrix();
    dlogits[ex.decoder_output[ti]] -= 1.0;
    dlogits *= scale;
    g.out_W.noalias() += dlogits * k.features[ti].transpose();
    g.out_b += dlogits;
    const VectorXd d_feat = w.out_W.transpose() * dlogits;
    d_top[ti] += d_feat.head(H);
    VectorXd d_ctx = d_feat.tail(H);

    for (std::size_t l = L; l-- > 0;) {
      if (l == L - 1)
        dh[l] += d_top[ti];
      else
        dh[l] += dx;
      lstm_backward(w.dec[l], g.dec[l], k.dec[l][ti], dh[l], dc[l], dx);
    }
    g.embed.row(ex.decoder_input[ti]) += dx.head(E).transpose();
    d_ctx += dx.tail(H);

    const AttentionCache& a = k.att[ti];
    const std::size_t rows = static_cast<std::size_t>(a.weights.size());
    VectorXd dw(static_cast<Eigen::Index>(rows));
    for (std::size_t j = 0; j < rows; ++j) dw[static_cast<Eigen::Index>(j)] = d_ctx.dot(memory_row(k, L, j));
    const double wdw = a.weights.dot(dw);
    VectorXd d_pre_sum = VectorXd::Zero(H);
    for (std::size_t j = 0; j < rows; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double wj = a.weights[jj];
      const double ds = wj * (dw[jj] - wdw);
      const VectorXd act = a.act.row(jj).transpose();
      g.att_v += ds * act;
      const VectorXd d_pre = (ds * w.att_v).cwiseProduct((1.0 - act.array().square()).matrix());
      d_pre_sum += d_pre;
      if (j < M) {
        d_ann[j] += wj * d_ctx;
        d_enc_proj[j] += d_pre;
      } else {
        d_top[j - M] += wj * d_ctx;
        d_dec_proj[j - M] += d_pre;
      }
    }
    g.att_Wq.noalias() += d_pre_sum * a.query.transpose();
    const VectorXd d_query = w.att_Wq.transpose() * d_pre_sum;
    if (ti == 0)
      d_init_top += d_query;
    else
      d_top[ti - 1] += d_query;
  }

  // Encoder annotations: projection used by every decoder step.
  for (std::size_t j = 0; j < M; ++j) {
    const VectorXd& ann = k.enc[L - 1][j].h;
    g.att_Wm.noalias() += d_enc_proj[j] * ann.transpose();
    d_ann[j].noalias() += w.att_Wm.transpose() * d_enc_proj[j];
  }

  std::vector<VectorXd> enc_dh(L, VectorXd::Zero(H)), enc_dc(L, VectorXd::Zero(H));
  if (cfg.carry_encoder_state) {
    enc_dh = dh;
    enc_dc = dc;
    enc_dh[L - 1] += d_init_top;
  }

  std::vector<VectorXd> d_below(M);
  for (std::size_t l = L; l-- > 0;) {
    VectorXd dh_next = enc_dh[l];
    VectorXd dc_next = enc_dc[l];
    for (std::size_t t = M; t-- > 0;) {
      dh_next += (l == L - 1) ? d_ann[t] : d_below[t];
      lstm_backward(w.enc[l], g.enc[l], k.enc[l][t], dh_next, dc_next, dx);
      d_below[t] = dx;
    }
  }
  for (std::size_t t = 0; t < M; ++t) g.embed.row(ex.encoder_input[t]) += d_below[t].transpose();
}

}  // namespace

std::vector<double> example_log_probs(const ParamSet& params, const ModelConfig& cfg,
                                      const TrainingExample& example) {
  check_example(cfg, example);
  const Weights w(params, cfg.num_layers);
  ExampleCache k;
  forward_example(w, cfg, example, k);
  std::vector<double> out(example.decoder_output.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = k.log_probs[t][example.decoder_output[t]];
  return out;
}

LossAndGrad loss_and_gradients(const ParamSet& params, const ModelConfig& cfg,
                               std::span<const TrainingExample> batch) {
  check_params(cfg, params);
  std::size_t total_tokens = 0;
  for (const auto& ex : batch) {
    check_example(cfg, ex);
    total_tokens += ex.decoder_output.size();
  }
  if (total_tokens == 0) throw DimensionMismatch("loss: batch has no output tokens");

  LossAndGrad out;
  out.tokens = total_tokens;
  out.grads = params.zeros_like();
  const Weights w(params, cfg.num_layers);
  Grads g(out.grads, cfg.num_layers);
  const double scale = 1.0 / static_cast<double>(total_tokens);
  long double nll = 0.0L;
  ExampleCache k;
  for (const auto& ex : batch) {
    forward_example(w, cfg, ex, k);
    for (std::size_t t = 0; t < ex.decoder_output.size(); ++t)
      nll -= static_cast<long double>(k.log_probs[t][ex.decoder_output[t]]);
    backward_example(w, g, cfg, ex, k, scale);
  }
  out.loss = static_cast<double>(nll / static_cast<long double>(total_tokens));
  if (!std::isfinite(out.loss)) throw NonFinite("loss is not finite");
  return out;
}

// ---------------------------------------------------------------------------
// Adapter

TokenSequence assemble_encoder_input(std::span<const TokenId> source,
                                     std::span<const TokenId> target, std::size_t start,
                                     TokenId eos) {
  TokenSequence enc(source.begin(), source.end());
  for (std::size_t i = 1; i < start && i < target.size(); ++i) enc.push_back(target[i]);
  enc.push_back(eos);
  return enc;
}

NeuralSeq2Seq::NeuralSeq2Seq(ModelConfig cfg, ParamSet params, TokenId sos, TokenId eos,
                             std::size_t glimpse_k)
    : cfg_(cfg), params_(std::move(params)), sos_(sos), eos_(eos), glimpse_k_(glimpse_k) {
  check_params(cfg_, params_);
  if (sos_ >= cfg_.vocab_size || eos_ >= cfg_.vocab_size)
    throw DimensionMismatch("sentinel ids outside the model vocabulary");
}

std::size_t NeuralSeq2Seq::glimpse_start(std::size_t position) const {
  if (glimpse_k_ == 0) return 0;
  return ((position - 1) / glimpse_k_) * glimpse_k_;
}

std::vector<double> NeuralSeq2Seq::next_token_distribution(std::span<const TokenId> source,
                                                           std::span<const TokenId> prefix) const {
  check_prefix(source, prefix);
  const std::size_t position = prefix.size();
  const std::size_t start = glimpse_start(position);
  const TokenSequence enc = assemble_encoder_input(source, prefix, start, eos_);
  auto [memory, state] = encode(params_, cfg_, enc);
  std::vector<double> probs;
  for (std::size_t pos = start; pos < position; ++pos) {
    StepOutput step = decode_step(params_, cfg_, state, prefix[pos], memory);
    state = std::move(step.state);
    probs = std::move(step.probs);
    if (cfg_.attention == AttentionMode::kSourceAndTarget)
      memory.append(state.top(), MemoryOrigin::kTarget);
  }
  return probs;
}

std::vector<double> NeuralSeq2Seq::continuation_log_probs(
    std::span<const TokenId> source, std::span<const TokenId> prefix,
    std::span<const TokenId> continuation) const {
  check_prefix(source, prefix);
  check_ids(continuation, vocab_size());
  for (std::size_t i = 0; i + 1 < continuation.size(); ++i)
    if (continuation[i] == eos_) throw CompletedSequence("continuation extends past EOS");
  TokenSequence full(prefix.begin(), prefix.end());
  full.insert(full.end(), continuation.begin(), continuation.end());

  std::vector<double> out;
  out.reserve(continuation.size());
  std::size_t position = prefix.size();
  while (position < full.size()) {
    const std::size_t start = glimpse_start(position);
    const std::size_t end = glimpse_k_ == 0 ? full.size() : std::min(full.size(), start + glimpse_k_ + 1);
    TrainingExample ex;
    ex.encoder_input = assemble_encoder_input(source, full, start, eos_);
    ex.decoder_input.assign(full.begin() + static_cast<std::ptrdiff_t>(start),
                            full.begin() + static_cast<std::ptrdiff_t>(end - 1));
    ex.decoder_output.assign(full.begin() + static_cast<std::ptrdiff_t>(start + 1),
                             full.begin() + static_cast<std::ptrdiff_t>(end));
    const auto lps = example_log_probs(params_, cfg_, ex);
    for (std::size_t pos = position; pos < end; ++pos) out.push_back(lps[pos - start - 1]);
    position = end;
  }
  return out;
}

}  // namespace seqgen
