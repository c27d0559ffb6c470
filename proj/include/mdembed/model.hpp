#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdembed/error.hpp"
#include "mdembed/rng.hpp"
#include "mdembed/tensor.hpp"

namespace mdembed {

enum class AttentionMode { kBidirectional, kCausal };

inline std::string to_string(AttentionMode m) {
  return m == AttentionMode::kBidirectional ? "bidirectional" : "causal";
}
inline AttentionMode parse_attention_mode(const std::string& s) {
  if (s == "bidirectional") return AttentionMode::kBidirectional;
  if (s == "causal" || s == "unidirectional") return AttentionMode::kCausal;
  throw config_error("unknown attention mode '" + s + "'");
}

struct ModelConfig {
  std::int32_t vocab_size = 256;
  std::int32_t d_model = 32;
  std::int32_t n_layers = 2;
  std::int32_t n_heads = 4;
  std::int32_t max_seq_len = 128;
  std::int32_t ff_multiplier = 4;
  AttentionMode default_mode = AttentionMode::kBidirectional;
  std::int32_t mask_token_id = 1;
  std::int32_t pad_token_id = 0;

  void validate() const {
    if (vocab_size <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 ||
        max_seq_len <= 0 || ff_multiplier <= 0)
      throw config_error("ModelConfig: all dimensions must be positive");
    if (d_model % n_heads != 0)
      throw config_error("ModelConfig: n_heads (" + std::to_string(n_heads) +
                         ") must divide d_model (" + std::to_string(d_model) +
                         ")");
    if (mask_token_id == pad_token_id)
      throw config_error("ModelConfig: mask and pad token ids must differ");
    if (mask_token_id < 0 || mask_token_id >= vocab_size || pad_token_id < 0 ||
        pad_token_id >= vocab_size)
      throw config_error(
          "ModelConfig: mask/pad token ids must lie inside the vocabulary");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size},
                     {"d_model", c.d_model},
                     {"n_layers", c.n_layers},
                     {"n_heads", c.n_heads},
                     {"max_seq_len", c.max_seq_len},
                     {"ff_multiplier", c.ff_multiplier},
                     {"default_mode", to_string(c.default_mode)},
                     {"mask_token_id", c.mask_token_id},
                     {"pad_token_id", c.pad_token_id}};
}
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("d_model").get_to(c.d_model);
  j.at("n_layers").get_to(c.n_layers);
  j.at("n_heads").get_to(c.n_heads);
  j.at("max_seq_len").get_to(c.max_seq_len);
  j.at("ff_multiplier").get_to(c.ff_multiplier);
  c.default_mode = parse_attention_mode(j.at("default_mode").get<std::string>());
  j.at("mask_token_id").get_to(c.mask_token_id);
  j.at("pad_token_id").get_to(c.pad_token_id);
}

// Low-rank additive adapter on one weight matrix: delta = (alpha/rank) * B*A.
// B starts at zero, so a freshly attached adapter leaves the layer unchanged.
template <typename S>
struct LoraAdapter {
  std::string target;
  std::int32_t rank = 0;
  double alpha = 0.0;
  Tensor<S> a;  // rank x in
  Tensor<S> b;  // out x rank
};

// Pre-norm transformer encoder with a switchable attention direction. The
// same weights serve masked-diffusion training (bidirectional) and
// autoregressive training (causal); the mode is chosen per forward call.
template <typename S>
class TransformerModel {
 public:
  explicit TransformerModel(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    std::size_t v = cfg_.vocab_size, d = cfg_.d_model;
    std::size_t ff = d * cfg_.ff_multiplier;
    tok_emb_ = Tensor<S>::zeros({v, d});
    pos_emb_ = Tensor<S>::zeros({std::size_t(cfg_.max_seq_len), d});
    layers_.resize(cfg_.n_layers);
    for (auto& l : layers_) {
      l.wq = Tensor<S>::zeros({d, d});
      l.bq = Tensor<S>::zeros({d});
      l.wk = Tensor<S>::zeros({d, d});
      l.bk = Tensor<S>::zeros({d});
      l.wv = Tensor<S>::zeros({d, d});
      l.bv = Tensor<S>::zeros({d});
      l.wo = Tensor<S>::zeros({d, d});
      l.bo = Tensor<S>::zeros({d});
      l.ln1_g = Tensor<S>::full({d}, S(1));
      l.ln1_b = Tensor<S>::zeros({d});
      l.ln2_g = Tensor<S>::full({d}, S(1));
      l.ln2_b = Tensor<S>::zeros({d});
      l.w1 = Tensor<S>::zeros({ff, d});
      l.b1 = Tensor<S>::zeros({ff});
      l.w2 = Tensor<S>::zeros({d, ff});
      l.b2 = Tensor<S>::zeros({d});
    }
    fin_g_ = Tensor<S>::full({d}, S(1));
    fin_b_ = Tensor<S>::zeros({d});
    out_w_ = Tensor<S>::zeros({v, d});
    out_b_ = Tensor<S>::zeros({v});
  }

  TransformerModel(ModelConfig cfg, Rng& rng) : TransformerModel(cfg) {
    init_weights(rng);
  }

  const ModelConfig& config() const { return cfg_; }

  // Gaussian init (sd 0.02) for weight matrices and embeddings; biases zero,
  // norm scales one. Two standard refinements keep the residual stream
  // dominated by token identity early in training: positional embeddings
  // start an order of magnitude smaller, and the projections that write into
  // the residual stream (attention output, feed-forward output) are scaled
  // down by 1/sqrt(2 * n_layers). Draw order follows the parameter registry,
  // which keeps trajectories reproducible from a seed.
  void init_weights(Rng& rng) {
    double residual_scale = 1.0 / std::sqrt(2.0 * double(cfg_.n_layers));
    for (auto& [name, p] : parameters()) {
      bool gaussian = p.shape().size() == 2;
      if (!gaussian) continue;
      double sd = 0.02;
      if (name == "pos_emb") sd = 0.002;
      if (name.ends_with("attn.wo") || name.ends_with("ffn.w2"))
        sd = 0.02 * residual_scale;
      for (auto& x : p.value()) x = S(rng.normal(0.0, sd));
    }
  }

  // Named parameter registry in a fixed order (checkpoint block order).
  std::vector<std::pair<std::string, Tensor<S>>> parameters() const {
    std::vector<std::pair<std::string, Tensor<S>>> out;
    out.emplace_back("tok_emb", tok_emb_);
    out.emplace_back("pos_emb", pos_emb_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      std::string p = "layers." + std::to_string(i) + ".";
      out.emplace_back(p + "ln1.gamma", l.ln1_g);
      out.emplace_back(p + "ln1.beta", l.ln1_b);
      out.emplace_back(p + "attn.wq", l.wq);
      out.emplace_back(p + "attn.bq", l.bq);
      out.emplace_back(p + "attn.wk", l.wk);
      out.emplace_back(p + "attn.bk", l.bk);
      out.emplace_back(p + "attn.wv", l.wv);
      out.emplace_back(p + "attn.bv", l.bv);
      out.emplace_back(p + "attn.wo", l.wo);
      out.emplace_back(p + "attn.bo", l.bo);
      out.emplace_back(p + "ln2.gamma", l.ln2_g);
      out.emplace_back(p + "ln2.beta", l.ln2_b);
      out.emplace_back(p + "ffn.w1", l.w1);
      out.emplace_back(p + "ffn.b1", l.b1);
      out.emplace_back(p + "ffn.w2", l.w2);
      out.emplace_back(p + "ffn.b2", l.b2);
    }
    out.emplace_back("final_ln.gamma", fin_g_);
    out.emplace_back("final_ln.beta", fin_b_);
    out.emplace_back("out.w", out_w_);
    out.emplace_back("out.b", out_b_);
    return out;
  }

  std::vector<std::pair<std::string, Tensor<S>>> lora_parameters() const {
    std::vector<std::pair<std::string, Tensor<S>>> out;
    for (const auto& [target, ad] : adapters_) {
      out.emplace_back("lora." + target + ".a", ad.a);
      out.emplace_back("lora." + target + ".b", ad.b);
    }
    return out;
  }

  std::vector<std::pair<std::string, Tensor<S>>> all_parameters() const {
    auto out = parameters();
    auto lora = lora_parameters();
    out.insert(out.end(), lora.begin(), lora.end());
    return out;
  }

  std::vector<std::pair<std::string, Tensor<S>>> trainable_parameters() const {
    std::vector<std::pair<std::string, Tensor<S>>> out;
    for (auto& [name, p] : all_parameters())
      if (p.requires_grad()) out.emplace_back(name, p);
    return out;
  }

  void set_all_requires_grad(bool on) {
    for (auto& [name, p] : parameters()) p.set_requires_grad(on);
  }

  Tensor<S> parameter(const std::string& name) const {
    for (auto& [n, p] : all_parameters())
      if (n == name) return p;
    throw value_error("TransformerModel: no parameter named '" + name + "'");
  }

  // ---- LoRA ----------------------------------------------------------------

  static std::vector<std::string> lora_targets_for_layer(std::size_t layer) {
    std::string p = "layers." + std::to_string(layer) + ".attn.";
    return {p + "wq", p + "wk", p + "wv", p + "wo"};
  }

  // Attaches adapters to the attention projections of the given layers.
  void attach_lora(const std::vector<std::int32_t>& layer_ids,
                   std::int32_t rank, double alpha, Rng& rng) {
    for (auto id : layer_ids) {
      if (id < 0 || std::size_t(id) >= layers_.size())
        throw value_error("attach_lora: layer id " + std::to_string(id) +
                          " out of range");
      for (const auto& t : lora_targets_for_layer(id))
        attach_lora_target(t, rank, alpha, rng);
    }
  }

  void attach_lora_target(const std::string& target, std::int32_t rank,
                          double alpha, Rng& rng) {
    if (rank < 1) throw value_error("attach_lora: rank must be >= 1");
    if (adapters_.count(target))
      throw value_error("attach_lora: adapter already attached to '" + target +
                        "'");
    Tensor<S> w = parameter(target);
    if (w.shape().size() != 2)
      throw value_error("attach_lora: target '" + target +
                        "' is not a weight matrix");
    LoraAdapter<S> ad;
    ad.target = target;
    ad.rank = rank;
    ad.alpha = alpha;
    ad.a = Tensor<S>::zeros({std::size_t(rank), w.cols()});
    for (auto& x : ad.a.value()) x = S(rng.normal(0.0, 0.02));
    ad.b = Tensor<S>::zeros({w.rows(), std::size_t(rank)});
    ad.a.set_requires_grad(true);
    ad.b.set_requires_grad(true);
    adapters_.emplace(target, std::move(ad));
  }

  bool has_lora() const { return !adapters_.empty(); }
  const std::map<std::string, LoraAdapter<S>>& adapters() const {
    return adapters_;
  }

  void freeze_base() { set_all_requires_grad(false); }

  // Folds every adapter delta into its base weight and removes the adapters.
  void merge_lora() {
    for (auto& [target, ad] : adapters_) {
      Tensor<S> w = parameter(target);
      S s = S(ad.alpha / double(ad.rank));
      std::size_t out = w.rows(), in = w.cols(), r = ad.rank;
      for (std::size_t i = 0; i < out; ++i)
        for (std::size_t j = 0; j < in; ++j) {
          S acc = S(0);
          for (std::size_t k = 0; k < r; ++k)
            acc += ad.b.value()[i * r + k] * ad.a.value()[k * in + j];
          w.value()[i * in + j] += s * acc;
        }
    }
    adapters_.clear();
  }

  void restore_lora(LoraAdapter<S> adapter) {
    if (adapters_.count(adapter.target))
      throw value_error("restore_lora: adapter already attached to '" +
                        adapter.target + "'");
    adapters_.emplace(adapter.target, std::move(adapter));
  }

  // ---- forward ---------------------------------------------------------------

  // Final-layer contextualized representation of every position,
  // [seq_len x d_model]. Positions at index >= n_real must hold the pad
  // token; they are computed but excluded from pooling by callers.
  Tensor<S> forward_hidden(Tape<S>* tape,
                           const std::vector<std::int32_t>& tokens,
                           std::size_t n_real, AttentionMode mode) const {
    validate_input(tokens, n_real);
    std::size_t len = tokens.size();
    std::vector<std::int32_t> positions(len);
    for (std::size_t i = 0; i < len; ++i) positions[i] = std::int32_t(i);
    Tensor<S> x = add(tape, embedding_lookup(tape, tok_emb_, tokens),
                      embedding_lookup(tape, pos_emb_, positions));
    Tensor<S> mask = attention_bias(len, n_real, mode);
    for (const auto& l : layers_) {
      Tensor<S> h = layer_norm(tape, x, l.ln1_g, l.ln1_b, S(kLayerNormEps));
      Tensor<S> a = attention(tape, h, l, mask);
      x = add(tape, x, a);
      Tensor<S> h2 = layer_norm(tape, x, l.ln2_g, l.ln2_b, S(kLayerNormEps));
      Tensor<S> f = linear(tape, gelu(tape, linear(tape, h2, "", l.w1, l.b1)),
                           "", l.w2, l.b2);
      x = add(tape, x, f);
    }
    return layer_norm(tape, x, fin_g_, fin_b_, S(kLayerNormEps));
  }

  // Unnormalized log-probabilities over the vocabulary, [seq_len x vocab].
  Tensor<S> forward_logits(Tape<S>* tape,
                           const std::vector<std::int32_t>& tokens,
                           std::size_t n_real, AttentionMode mode) const {
    Tensor<S> h = forward_hidden(tape, tokens, n_real, mode);
    return linear(tape, h, "out.w", out_w_, out_b_);
  }

  static constexpr double kLayerNormEps = 1e-5;

 private:
  struct Layer {
    Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<S> ln1_g, ln1_b, ln2_g, ln2_b;
    Tensor<S> w1, b1, w2, b2;
  };

  void validate_input(const std::vector<std::int32_t>& tokens,
                      std::size_t n_real) const {
    if (tokens.empty()) throw value_error("forward: empty token sequence");
    if (tokens.size() > std::size_t(cfg_.max_seq_len))
      throw value_error("forward: sequence length " +
                        std::to_string(tokens.size()) +
                        " exceeds max_seq_len " +
                        std::to_string(cfg_.max_seq_len));
    if (n_real == 0 || n_real > tokens.size())
      throw value_error("forward: n_real " + std::to_string(n_real) +
                        " outside [1, " + std::to_string(tokens.size()) + "]");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] < 0 || tokens[i] >= cfg_.vocab_size)
        throw value_error("forward: token id " + std::to_string(tokens[i]) +
                          " at position " + std::to_string(i) +
                          " outside vocabulary of " +
                          std::to_string(cfg_.vocab_size));
      if (i >= n_real && tokens[i] != cfg_.pad_token_id)
        throw value_error("forward: non-pad token after padding starts at "
                          "position " +
                          std::to_string(i));
      if (i < n_real && tokens[i] == cfg_.pad_token_id)
        throw value_error("forward: pad token inside the real region at "
                          "position " +
                          std::to_string(i) + " (pads must be trailing)");
    }
  }

  // Additive attention bias: 0 where attention is allowed, a large negative
  // constant where it is not. Pads are never attended to; causal mode further
  // forbids looking at positions after the query.
  Tensor<S> attention_bias(std::size_t len, std::size_t n_real,
                           AttentionMode mode) const {
    Tensor<S> m = Tensor<S>::zeros({len, len});
    constexpr S kNeg = S(-1e9);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < len; ++j) {
        bool ok = j < n_real &&
                  (mode == AttentionMode::kBidirectional || j <= i);
        if (!ok) m.value()[i * len + j] = kNeg;
      }
    return m;
  }

  Tensor<S> linear(Tape<S>* tape, const Tensor<S>& x, const std::string& name,
                   const Tensor<S>& w, const Tensor<S>& bias) const {
    Tensor<S> y = add_row_bias(tape, matmul(tape, x, w, false, true), bias);
    if (!name.empty()) {
      auto it = adapters_.find(name);
      if (it != adapters_.end()) {
        const auto& ad = it->second;
        Tensor<S> down = matmul(tape, x, ad.a, false, true);
        Tensor<S> up = matmul(tape, down, ad.b, false, true);
        y = add(tape, y, scale(tape, up, S(ad.alpha / double(ad.rank))));
      }
    }
    return y;
  }

  Tensor<S> attention(Tape<S>* tape, const Tensor<S>& h, const Layer& l,
                      const Tensor<S>& bias_mask) const {
    std::size_t layer_index = &l - layers_.data();
    std::string p = "layers." + std::to_string(layer_index) + ".attn.";
    Tensor<S> q = linear(tape, h, p + "wq", l.wq, l.bq);
    Tensor<S> k = linear(tape, h, p + "wk", l.wk, l.bk);
    Tensor<S> v = linear(tape, h, p + "wv", l.wv, l.bv);
    std::size_t d = cfg_.d_model, nh = cfg_.n_heads, dh = d / nh;
    S inv_sqrt = S(1.0 / std::sqrt(double(dh)));
    std::vector<Tensor<S>> heads;
    heads.reserve(nh);
    for (std::size_t hidx = 0; hidx < nh; ++hidx) {
      std::size_t c0 = hidx * dh, c1 = c0 + dh;
      Tensor<S> qh = slice_cols(tape, q, c0, c1);
      Tensor<S> kh = slice_cols(tape, k, c0, c1);
      Tensor<S> vh = slice_cols(tape, v, c0, c1);
      Tensor<S> scores =
          add(tape, scale(tape, matmul(tape, qh, kh, false, true), inv_sqrt),
              bias_mask);
      Tensor<S> probs = softmax_rows(tape, scores);
      heads.push_back(matmul(tape, probs, vh));
    }
    Tensor<S> ctx = concat_cols(tape, heads);
    return linear(tape, ctx, p + "wo", l.wo, l.bo);
  }

  ModelConfig cfg_;
  Tensor<S> tok_emb_, pos_emb_;
  std::vector<Layer> layers_;
  Tensor<S> fin_g_, fin_b_, out_w_, out_b_;
  std::map<std::string, LoraAdapter<S>> adapters_;
};

}  // namespace mdembed
