#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdembed/error.hpp"
#include "mdembed/model.hpp"
#include "mdembed/rng.hpp"
#include "mdembed/tensor.hpp"

namespace mdembed {

// Lower bound for the corruption level. The 1/t loss weight is unbounded as
// t approaches 0, so sampled noise levels live in (kNoiseFloor, 1].
inline constexpr double kNoiseFloor = 1e-3;

// One diffusion-training batch: originals, corrupted copies, the per-position
// mask indicator and the per-sequence noise level.
struct MaskedBatch {
  std::vector<std::vector<std::int32_t>> x0;
  std::vector<std::vector<std::int32_t>> xt;
  std::vector<std::vector<std::uint8_t>> mask;  // 1 where the token was masked
  std::vector<double> t;
  std::vector<std::size_t> n_real;  // positions >= n_real are padding

  std::size_t size() const { return x0.size(); }

  void validate(std::int32_t mask_token_id, std::int32_t pad_token_id) const {
    for (std::size_t s = 0; s < size(); ++s) {
      if (t[s] <= 0.0 || t[s] > 1.0)
        throw value_error("MaskedBatch: noise level t=" + std::to_string(t[s]) +
                          " outside (0, 1]");
      for (std::size_t i = 0; i < x0[s].size(); ++i) {
        bool is_real = i < n_real[s];
        if (!is_real && mask[s][i])
          throw value_error("MaskedBatch: padding position masked");
        if (mask[s][i]) {
          if (xt[s][i] != mask_token_id || x0[s][i] == pad_token_id)
            throw value_error("MaskedBatch: mask indicator inconsistent with "
                              "token content");
        } else if (xt[s][i] != x0[s][i]) {
          throw value_error("MaskedBatch: unmasked position differs from x0");
        }
      }
    }
  }
};

// Forward masking process: every non-pad token is independently replaced by
// the mask token with probability t. When t is not supplied it is sampled
// per sequence, uniformly on (kNoiseFloor, 1].
inline MaskedBatch mask_forward_process(
    const std::vector<std::vector<std::int32_t>>& x0,
    const std::vector<std::size_t>& n_real, std::optional<double> t,
    std::int32_t mask_token_id, std::int32_t pad_token_id, Rng& rng) {
  if (x0.size() != n_real.size())
    throw value_error("mask_forward_process: x0/n_real size mismatch");
  if (t && (*t <= 0.0 || *t > 1.0))
    throw value_error("mask_forward_process: t=" + std::to_string(*t) +
                      " outside (0, 1]");
  MaskedBatch out;
  out.x0 = x0;
  out.xt = x0;
  out.n_real = n_real;
  out.mask.resize(x0.size());
  out.t.resize(x0.size());
  for (std::size_t s = 0; s < x0.size(); ++s) {
    double ts = t ? *t : 1.0 - (1.0 - kNoiseFloor) * rng.uniform();
    out.t[s] = ts;
    out.mask[s].assign(x0[s].size(), 0);
    for (std::size_t i = 0; i < x0[s].size() && i < n_real[s]; ++i) {
      if (rng.bernoulli(ts)) {
        out.mask[s][i] = 1;
        out.xt[s][i] = mask_token_id;
      }
    }
  }
  return out;
}

// Denoising loss: per sequence, (1/t) * sum over masked positions of the
// negative log-probability of the original token; the batch value is the
// mean over sequences. Logits at unmasked positions do not participate.
template <typename S>
Tensor<S> diffusion_loss(Tape<S>* tape, const std::vector<Tensor<S>>& logits,
                         const MaskedBatch& batch) {
  if (logits.size() != batch.size())
    throw value_error("diffusion_loss: " + std::to_string(logits.size()) +
                      " logit matrices for " + std::to_string(batch.size()) +
                      " sequences");
  std::vector<Tensor<S>> per_seq;
  per_seq.reserve(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& seq = batch.x0[s];
    if (logits[s].rows() != seq.size())
      throw value_error("diffusion_loss: logits rows " +
                        std::to_string(logits[s].rows()) +
                        " vs sequence length " + std::to_string(seq.size()));
    std::vector<S> weights(seq.size(), S(0));
    S w = S(1.0 / batch.t[s]);
    for (std::size_t i = 0; i < seq.size(); ++i)
      if (batch.mask[s][i]) weights[i] = w;
    per_seq.push_back(weighted_cross_entropy(tape, logits[s], seq, weights));
  }
  return mean_all(tape, stack_scalars(tape, per_seq));
}

// Autoregressive baseline loss: mean negative log-probability of the next
// token over every non-pad transition in the batch. Logits must come from a
// causal-mode forward on the uncorrupted sequences.
template <typename S>
Tensor<S> ar_next_token_loss(Tape<S>* tape,
                             const std::vector<Tensor<S>>& logits,
                             const std::vector<std::vector<std::int32_t>>& x0,
                             const std::vector<std::size_t>& n_real) {
  if (logits.size() != x0.size() || x0.size() != n_real.size())
    throw value_error("ar_next_token_loss: batch size mismatch");
  std::size_t transitions = 0;
  for (std::size_t s = 0; s < x0.size(); ++s) {
    if (n_real[s] < 2)
      throw value_error("ar_next_token_loss: sequence " + std::to_string(s) +
                        " has fewer than 2 non-pad tokens");
    transitions += n_real[s] - 1;
  }
  std::vector<Tensor<S>> per_seq;
  per_seq.reserve(x0.size());
  S w = S(1.0 / double(transitions));
  for (std::size_t s = 0; s < x0.size(); ++s) {
    const auto& seq = x0[s];
    if (logits[s].rows() != seq.size())
      throw value_error("ar_next_token_loss: logits rows " +
                        std::to_string(logits[s].rows()) +
                        " vs sequence length " + std::to_string(seq.size()));
    // Row j predicts token j+1: shift targets left, weight the last row 0.
    std::vector<std::int32_t> targets(seq.size(), 0);
    std::vector<S> weights(seq.size(), S(0));
    for (std::size_t j = 0; j + 1 < n_real[s]; ++j) {
      targets[j] = seq[j + 1];
      weights[j] = w;
    }
    per_seq.push_back(weighted_cross_entropy(tape, logits[s], targets, weights));
  }
  return sum_all(tape, stack_scalars(tape, per_seq));
}

// Contrastive objective for one anchor: softmax cross-entropy over the
// positive against the negatives, with cosine similarity sharpened by a
// temperature. Equal similarities everywhere give exactly ln(1 + m).
template <typename S>
Tensor<S> infonce_loss(Tape<S>* tape, const Tensor<S>& query_emb,
                       const Tensor<S>& pos_emb,
                       const std::vector<Tensor<S>>& neg_embs,
                       double temperature) {
  if (temperature <= 0.0)
    throw value_error("infonce_loss: temperature must be positive");
  std::vector<Tensor<S>> sims;
  sims.reserve(neg_embs.size() + 1);
  sims.push_back(cosine_sim(tape, query_emb, pos_emb));
  for (const auto& n : neg_embs) sims.push_back(cosine_sim(tape, query_emb, n));
  Tensor<S> pos_scaled = scale(tape, sims.front(), S(1.0 / temperature));
  Tensor<S> all = scale(tape, stack_scalars(tape, sims), S(1.0 / temperature));
  return sub(tape, logsumexp(tape, all), pos_scaled);
}

// Batch form: each anchor is scored against its own hard negatives plus,
// when enabled, the positives of the other in-batch items (deduplicated by
// exact text match against the anchor's own positive). The caller supplies
// the dedup decision through `use_in_batch`, since texts live outside this
// module.
template <typename S>
struct AnchorEmbeddings {
  Tensor<S> query;
  Tensor<S> positive;
  std::vector<Tensor<S>> negatives;
};

template <typename S>
Tensor<S> infonce_batch_loss(Tape<S>* tape,
                             const std::vector<AnchorEmbeddings<S>>& batch,
                             double temperature, bool in_batch_negatives,
                             const std::vector<std::vector<std::uint8_t>>*
                                 in_batch_eligible = nullptr) {
  if (batch.empty()) throw value_error("infonce_batch_loss: empty batch");
  std::vector<Tensor<S>> losses;
  losses.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<Tensor<S>> negs = batch[i].negatives;
    if (in_batch_negatives) {
      for (std::size_t j = 0; j < batch.size(); ++j) {
        if (j == i) continue;
        if (in_batch_eligible && !(*in_batch_eligible)[i][j]) continue;
        negs.push_back(batch[j].positive);
      }
    }
    losses.push_back(
        infonce_loss(tape, batch[i].query, batch[i].positive, negs,
                     temperature));
  }
  return mean_all(tape, stack_scalars(tape, losses));
}

// Reverse process: iteratively commits the most confident masked positions.
// Each round fills ceil(remaining / rounds_left) positions with their argmax
// token; n_steps larger than the number of masked positions simply finishes
// early. Deterministic given the model; the generator argument keeps the
// signature uniform with the other stochastic operations.
template <typename S>
std::vector<std::int32_t> sample_unmask(const TransformerModel<S>& model,
                                        std::vector<std::int32_t> tokens,
                                        std::size_t n_real, int n_steps,
                                        Rng& /*rng*/) {
  if (n_steps < 1) throw value_error("sample_unmask: n_steps must be >= 1");
  const std::int32_t mask_id = model.config().mask_token_id;
  auto masked_positions = [&]() {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < tokens.size() && i < n_real; ++i)
      if (tokens[i] == mask_id) out.push_back(i);
    return out;
  };
  std::vector<std::size_t> masked = masked_positions();
  int rounds_left = n_steps;
  while (!masked.empty()) {
    std::size_t commit =
        (rounds_left <= 1)
            ? masked.size()
            : (masked.size() + rounds_left - 1) / std::size_t(rounds_left);
    Tensor<S> logits =
        model.forward_logits(nullptr, tokens, n_real,
                             AttentionMode::kBidirectional);
    struct Choice {
      std::size_t pos;
      std::int32_t token;
      double confidence;
    };
    std::vector<Choice> choices;
    choices.reserve(masked.size());
    std::size_t v = logits.cols();
    for (std::size_t pos : masked) {
      const S* row = logits.value().data() + pos * v;
      S mx = row[0];
      std::int32_t arg = 0;
      for (std::size_t j = 1; j < v; ++j)
        if (row[j] > mx) {
          mx = row[j];
          arg = std::int32_t(j);
        }
      double denom = 0.0;
      for (std::size_t j = 0; j < v; ++j)
        denom += std::exp(double(row[j]) - double(mx));
      choices.push_back(Choice{pos, arg, 1.0 / denom});
    }
    std::stable_sort(choices.begin(), choices.end(),
                     [](const Choice& a, const Choice& b) {
                       if (a.confidence != b.confidence)
                         return a.confidence > b.confidence;
                       return a.pos < b.pos;
                     });
    for (std::size_t i = 0; i < commit && i < choices.size(); ++i)
      tokens[choices[i].pos] = choices[i].token;
    --rounds_left;
    masked = masked_positions();
  }
  return tokens;
}

// Contrastive training record: a query, its positive document and any number
// of hard negatives, with optional provenance labels.
struct Triplet {
  std::string task_type;
  std::string query;
  std::string instruction;
  std::string positive;
  std::vector<std::string> hard_negatives;
  std::string concept_name;
  std::string domain;

  void validate() const {
    if (positive.empty()) throw value_error("Triplet: positive text is empty");
    if (query.empty()) throw value_error("Triplet: query text is empty");
  }
};

inline void to_json(nlohmann::json& j, const Triplet& t) {
  j = nlohmann::json{{"task_type", t.task_type},
                     {"query", t.query},
                     {"instruction", t.instruction},
                     {"positive", t.positive},
                     {"negatives", t.hard_negatives},
                     {"concept", t.concept_name},
                     {"domain", t.domain}};
}
inline void from_json(const nlohmann::json& j, Triplet& t) {
  j.at("task_type").get_to(t.task_type);
  j.at("query").get_to(t.query);
  t.instruction = j.value("instruction", "");
  j.at("positive").get_to(t.positive);
  j.at("negatives").get_to(t.hard_negatives);
  t.concept_name = j.value("concept", "");
  t.domain = j.value("domain", "");
}

}  // namespace mdembed
