#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdembed/checkpoint.hpp"
#include "mdembed/embedder.hpp"
#include "mdembed/error.hpp"
#include "mdembed/model.hpp"
#include "mdembed/objectives.hpp"
#include "mdembed/optim.hpp"
#include "mdembed/reasonaug.hpp"
#include "mdembed/rng.hpp"
#include "mdembed/vocab.hpp"

namespace mdembed {

// ---- synthetic pretraining corpus ------------------------------------------------

struct CorpusSpec {
  std::string kind = "mixed";  // mixed | cluster | passkey | needle | grammar
  int n_sequences = 2048;
  int seq_len = 64;  // clause sentences (passkey/needle) run at full length
  int short_len = 32;  // cluster and grammar sentences
};

inline void to_json(nlohmann::json& j, const CorpusSpec& c) {
  j = nlohmann::json{{"kind", c.kind},
                     {"n_sequences", c.n_sequences},
                     {"seq_len", c.seq_len},
                     {"short_len", c.short_len}};
}
inline void from_json(const nlohmann::json& j, CorpusSpec& c) {
  c.kind = j.value("kind", c.kind);
  c.n_sequences = j.value("n_sequences", c.n_sequences);
  c.seq_len = j.value("seq_len", c.seq_len);
  c.short_len = j.value("short_len", c.short_len);
}

// Deterministic token-successor rule used by the "grammar" corpus: a fixed
// cycle over the first kGrammarAlphabet content words, so token i+1 is a
// forced function of token i.
inline constexpr std::int32_t kGrammarAlphabet = 32;

inline std::int32_t grammar_successor(const Vocab& vocab, std::int32_t token) {
  auto content = vocab.content_range();
  std::int32_t n = std::min(kGrammarAlphabet, content.size());
  if (token < content.begin || token >= content.begin + n)
    throw value_error("grammar_successor: token outside the grammar alphabet");
  std::int32_t offset = token - content.begin;
  return content.begin + (offset + 1) % n;
}

namespace detail {

inline std::vector<std::int32_t> cluster_sentence(const Vocab& vocab,
                                                  int seq_len, Rng& rng) {
  auto content = vocab.content_range();
  auto common = vocab.common_range();
  std::vector<std::int32_t> sig;
  for (auto idx : rng.sample_without_replacement(content.size(), 4))
    sig.push_back(content.begin + std::int32_t(idx));
  std::vector<std::int32_t> seq;
  seq.reserve(seq_len);
  for (int i = 0; i < seq_len; ++i) {
    double u = rng.uniform();
    if (u < 0.6)
      seq.push_back(sig[rng.uniform_int(sig.size())]);
    else if (u < 0.85)
      seq.push_back(common.begin + std::int32_t(rng.uniform_int(common.size())));
    else
      seq.push_back(content.begin +
                    std::int32_t(rng.uniform_int(content.size())));
  }
  rng.shuffle(seq);
  return seq;
}

// Corpus clause sentences use the same repeated-boilerplate style as the
// generated needle tasks: cyclic filler with the clause overwriting a random
// window. The cycle starts at a random phase so absolute positions carry no
// information and the model must predict filler from its neighbors.
inline std::vector<std::int32_t> clause_sentence(
    const std::vector<std::int32_t>& pool, int seq_len,
    const std::vector<std::int32_t>& clause, Rng& rng) {
  std::size_t phase = rng.uniform_int(pool.size());
  std::vector<std::int32_t> seq;
  seq.reserve(seq_len);
  for (int i = 0; i < seq_len; ++i)
    seq.push_back(pool[(phase + i) % pool.size()]);
  std::size_t at = rng.uniform_int(seq_len - clause.size() + 1);
  for (std::size_t i = 0; i < clause.size(); ++i) seq[at + i] = clause[i];
  return seq;
}

inline std::vector<std::int32_t> corpus_filler_pool(const Vocab& vocab,
                                                    Rng& rng, int pool_words) {
  auto content = vocab.content_range();
  auto common = vocab.common_range();
  std::vector<std::int32_t> pool;
  for (int i = 0; i < pool_words; ++i) {
    bool pick_common = rng.bernoulli(0.3);
    pool.push_back(pick_common
                       ? common.begin +
                             std::int32_t(rng.uniform_int(common.size()))
                       : content.begin +
                             std::int32_t(rng.uniform_int(content.size())));
  }
  return pool;
}

inline std::vector<std::int32_t> passkey_sentence(
    const Vocab& vocab, const std::vector<std::int32_t>& pool, int seq_len,
    Rng& rng) {
  auto names = vocab.name_range();
  auto digits = vocab.digit_range();
  std::vector<std::int32_t> clause = {
      vocab.id("the"), vocab.id("passkey"), vocab.id("for"),
      names.begin + std::int32_t(rng.uniform_int(names.size())),
      vocab.id("is")};
  for (int d = 0; d < 4; ++d)
    clause.push_back(digits.begin + std::int32_t(rng.uniform_int(10)));
  return clause_sentence(pool, seq_len, clause, rng);
}

inline std::vector<std::int32_t> needle_sentence(
    const Vocab& vocab, const std::vector<std::int32_t>& pool, int seq_len,
    Rng& rng) {
  auto names = vocab.name_range();
  auto content = vocab.content_range();
  std::vector<std::int32_t> clause = {
      vocab.id("the"),
      content.begin + std::int32_t(rng.uniform_int(content.size())),
      vocab.id("of"),
      names.begin + std::int32_t(rng.uniform_int(names.size())),
      vocab.id("is"),
      content.begin + std::int32_t(rng.uniform_int(content.size()))};
  return clause_sentence(pool, seq_len, clause, rng);
}

inline std::vector<std::int32_t> grammar_sentence(const Vocab& vocab,
                                                  int seq_len, Rng& rng) {
  auto content = vocab.content_range();
  std::int32_t n = std::min(kGrammarAlphabet, content.size());
  std::vector<std::int32_t> seq;
  seq.reserve(seq_len);
  std::int32_t tok = content.begin + std::int32_t(rng.uniform_int(n));
  for (int i = 0; i < seq_len; ++i) {
    seq.push_back(tok);
    tok = grammar_successor(vocab, tok);
  }
  return seq;
}

}  // namespace detail

inline std::vector<std::vector<std::int32_t>> build_corpus(
    const CorpusSpec& spec, const Vocab& vocab, Rng& rng) {
  if (spec.n_sequences < 1 || spec.seq_len < 12 || spec.short_len < 12)
    throw config_error(
        "build_corpus: need n_sequences >= 1 and lengths >= 12");
  std::vector<std::vector<std::int32_t>> out;
  out.reserve(spec.n_sequences);
  auto passkey_pool = detail::corpus_filler_pool(vocab, rng, 9);
  auto needle_pool = detail::corpus_filler_pool(vocab, rng, 6);
  for (int i = 0; i < spec.n_sequences; ++i) {
    std::string kind = spec.kind;
    if (kind == "mixed") {
      double u = rng.uniform();
      kind = u < 0.5 ? "cluster" : (u < 0.75 ? "passkey" : "needle");
    }
    if (kind == "cluster")
      out.push_back(detail::cluster_sentence(vocab, spec.short_len, rng));
    else if (kind == "passkey")
      out.push_back(
          detail::passkey_sentence(vocab, passkey_pool, spec.seq_len, rng));
    else if (kind == "needle")
      out.push_back(
          detail::needle_sentence(vocab, needle_pool, spec.seq_len, rng));
    else if (kind == "grammar")
      out.push_back(detail::grammar_sentence(vocab, spec.short_len, rng));
    else
      throw config_error("build_corpus: unknown corpus kind '" + spec.kind +
                         "'");
  }
  return out;
}

// ---- run configuration ---------------------------------------------------------

struct LoraSpec {
  bool enabled = false;
  std::int32_t rank = 16;
  double alpha = 32.0;
};

inline void to_json(nlohmann::json& j, const LoraSpec& l) {
  j = nlohmann::json{{"enabled", l.enabled}, {"rank", l.rank},
                     {"alpha", l.alpha}};
}
inline void from_json(const nlohmann::json& j, LoraSpec& l) {
  l.enabled = j.value("enabled", l.enabled);
  l.rank = j.value("rank", l.rank);
  l.alpha = j.value("alpha", l.alpha);
}

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  std::string objective = "diffusion";  // diffusion | autoregressive
  CorpusSpec corpus;
  int pretrain_steps = 2000;
  int finetune_steps = 500;
  std::string finetune_dataset;
  int batch_size = 4;
  int grad_accum = 1;
  double lr = 1e-4;
  int warmup_steps = 100;
  LoraSpec lora;
  int max_input_len = 128;
  int max_doc_len = 128;
  double temperature = 0.05;
  bool in_batch_negatives = true;
  double weight_decay = 0.0;

  void validate() const {
    model.validate();
    if (objective != "diffusion" && objective != "autoregressive")
      throw config_error("RunConfig: objective must be 'diffusion' or "
                         "'autoregressive', got '" + objective + "'");
    if (pretrain_steps < 0 || finetune_steps < 0)
      throw config_error("RunConfig: step counts must be nonnegative");
    if (batch_size < 1 || grad_accum < 1)
      throw config_error("RunConfig: batch_size and grad_accum must be >= 1");
    if (lr <= 0.0) throw config_error("RunConfig: lr must be positive");
    if (warmup_steps < 0 ||
        warmup_steps > pretrain_steps + finetune_steps)
      throw config_error("RunConfig: warmup_steps must lie in [0, total "
                         "steps]");
    if (temperature <= 0.0)
      throw config_error("RunConfig: temperature must be positive");
    if (max_input_len < 8 || max_doc_len < 8)
      throw config_error("RunConfig: max input/document lengths too small");
    if (max_input_len > model.max_seq_len || max_doc_len > model.max_seq_len)
      throw config_error("RunConfig: max input/document lengths exceed "
                         "max_seq_len");
    if (corpus.seq_len > model.max_seq_len)
      throw config_error("RunConfig: corpus seq_len exceeds max_seq_len");
    if (lora.enabled && lora.rank < 1)
      throw config_error("RunConfig: LoRA rank must be >= 1");
  }

  // Desk-scale defaults: everything completes on one CPU core in minutes.
  static RunConfig desk_profile() {
    RunConfig cfg;
    cfg.model.vocab_size = 256;
    cfg.model.d_model = 32;
    cfg.model.n_layers = 2;
    cfg.model.n_heads = 4;
    cfg.model.max_seq_len = 128;
    cfg.corpus.kind = "mixed";
    cfg.corpus.n_sequences = 2048;
    cfg.corpus.seq_len = 64;
    cfg.corpus.short_len = 64;
    cfg.pretrain_steps = 2000;
    cfg.finetune_steps = 500;
    cfg.lr = 3e-3;
    cfg.warmup_steps = 100;
    cfg.batch_size = 16;
    cfg.grad_accum = 1;
    return cfg;
  }

  static RunConfig profile(const std::string& name) {
    if (name == "desk") return desk_profile();
    throw config_error("RunConfig: unknown profile '" + name + "'");
  }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"model", c.model},
                     {"objective", c.objective},
                     {"corpus", c.corpus},
                     {"pretrain_steps", c.pretrain_steps},
                     {"finetune_steps", c.finetune_steps},
                     {"finetune_dataset", c.finetune_dataset},
                     {"batch_size", c.batch_size},
                     {"grad_accum", c.grad_accum},
                     {"lr", c.lr},
                     {"warmup_steps", c.warmup_steps},
                     {"lora", c.lora},
                     {"max_input_len", c.max_input_len},
                     {"max_doc_len", c.max_doc_len},
                     {"temperature", c.temperature},
                     {"in_batch_negatives", c.in_batch_negatives},
                     {"weight_decay", c.weight_decay}};
}

// A "profile" key seeds the defaults before the explicit keys override them.
inline void from_json(const nlohmann::json& j, RunConfig& c) {
  if (j.contains("profile"))
    c = RunConfig::profile(j.at("profile").get<std::string>());
  c.seed = j.value("seed", c.seed);
  if (j.contains("model")) j.at("model").get_to(c.model);
  c.objective = j.value("objective", c.objective);
  if (j.contains("corpus")) j.at("corpus").get_to(c.corpus);
  c.pretrain_steps = j.value("pretrain_steps", c.pretrain_steps);
  c.finetune_steps = j.value("finetune_steps", c.finetune_steps);
  c.finetune_dataset = j.value("finetune_dataset", c.finetune_dataset);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.grad_accum = j.value("grad_accum", c.grad_accum);
  c.lr = j.value("lr", c.lr);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  if (j.contains("lora")) j.at("lora").get_to(c.lora);
  c.max_input_len = j.value("max_input_len", c.max_input_len);
  c.max_doc_len = j.value("max_doc_len", c.max_doc_len);
  c.temperature = j.value("temperature", c.temperature);
  c.in_batch_negatives = j.value("in_batch_negatives", c.in_batch_negatives);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
}

// ---- training ---------------------------------------------------------------------

struct TrainLogRow {
  std::uint64_t step = 0;
  std::string stage;  // "pretrain" | "finetune"
  double loss = 0.0;
};

struct TrainOutput {
  CheckpointMeta meta;
  std::vector<TrainLogRow> log;
  std::string checkpoint_path;
};

inline void write_train_log(const std::string& path,
                            const std::vector<TrainLogRow>& log) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("write_train_log: cannot open '" + path + "'");
  out << "step\tstage\tloss\n";
  char buf[64];
  for (const auto& row : log) {
    std::snprintf(buf, sizeof(buf), "%.17g", row.loss);
    out << row.step << "\t" << row.stage << "\t" << buf << "\n";
  }
}

namespace detail {

using ParamList = std::vector<std::pair<std::string, Tensor<float>>>;

inline std::vector<std::vector<float>> snapshot_params(const ParamList& params) {
  std::vector<std::vector<float>> out;
  out.reserve(params.size());
  for (const auto& [name, p] : params) out.push_back(p.value());
  return out;
}

inline void restore_params(ParamList& params,
                           const std::vector<std::vector<float>>& snapshot) {
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i].second.value() = snapshot[i];
}

// Runs one optimization stage; on a non-finite loss it restores the last
// good parameters, saves them to abort_path and raises.
template <typename StepFn>
void run_stage(const char* stage, int steps, const RunConfig& cfg,
               TransformerModel<float>& model, ParamList trainable,
               StepFn&& micro_loss, std::vector<TrainLogRow>& log,
               const std::string& abort_path, const Vocab& vocab,
               CheckpointMeta meta) {
  if (steps <= 0) return;
  AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.weight_decay = cfg.weight_decay;
  AdamW<float> opt(opt_cfg, trainable);
  auto last_good = snapshot_params(trainable);
  std::uint64_t good_steps = 0;
  for (int step = 1; step <= steps; ++step) {
    double warm = cfg.warmup_steps > 0
                      ? std::min(1.0, double(step) / double(cfg.warmup_steps))
                      : 1.0;
    opt.set_lr(cfg.lr * warm);
    double step_loss = 0.0;
    bool bad = false;
    std::string bad_reason;
    try {
      opt.zero_grad();
      for (int micro = 0; micro < cfg.grad_accum; ++micro) {
        Tape<float> tape;
        Tensor<float> loss = micro_loss(tape, step, micro);
        Tensor<float> scaled =
            scale(&tape, loss, 1.0f / float(cfg.grad_accum));
        backward(tape, scaled);
        step_loss += double(scaled.item());
      }
      if (!std::isfinite(step_loss)) {
        bad = true;
        bad_reason = "non-finite loss";
      } else {
        opt.step();
      }
    } catch (const Error& e) {
      if (e.kind() == Error::Kind::kValue) {
        bad = true;
        bad_reason = e.what();
      } else {
        throw;
      }
    }
    if (bad) {
      restore_params(trainable, last_good);
      if (!abort_path.empty()) {
        meta.step = good_steps;
        save_checkpoint(abort_path, model, vocab.words(), meta);
      }
      throw value_error(std::string(stage) + " aborted at step " +
                        std::to_string(step) + " (" + bad_reason +
                        "); last good checkpoint saved to '" + abort_path +
                        "'");
    }
    last_good = snapshot_params(trainable);
    good_steps = step;
    log.push_back(TrainLogRow{std::uint64_t(step), stage, step_loss});
  }
}

}  // namespace detail

// Stage 1: pretrains with the configured objective on the synthetic corpus —
// masked-diffusion denoising under bidirectional attention, or next-token
// prediction under causal attention.
inline void pretrain_stage(const RunConfig& cfg, TransformerModel<float>& model,
                           const Vocab& vocab, Rng& rng,
                           std::vector<TrainLogRow>& log,
                           const std::string& abort_path) {
  if (cfg.pretrain_steps <= 0) return;
  Rng corpus_rng = rng.split("corpus");
  auto corpus = build_corpus(cfg.corpus, vocab, corpus_rng);
  Rng batch_rng = rng.split("pretrain.batch");
  Rng mask_rng = rng.split("pretrain.mask");
  model.set_all_requires_grad(true);
  bool diffusion = cfg.objective == "diffusion";

  auto micro_loss = [&](Tape<float>& tape, int, int) {
    std::vector<std::vector<std::int32_t>> x0;
    std::vector<std::size_t> n_real;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& seq = corpus[batch_rng.uniform_int(corpus.size())];
      x0.push_back(seq);
      n_real.push_back(seq.size());
    }
    std::vector<Tensor<float>> logits;
    if (diffusion) {
      auto batch = mask_forward_process(x0, n_real, std::nullopt,
                                        cfg.model.mask_token_id,
                                        cfg.model.pad_token_id, mask_rng);
      for (std::size_t s = 0; s < batch.size(); ++s)
        logits.push_back(model.forward_logits(&tape, batch.xt[s], n_real[s],
                                              AttentionMode::kBidirectional));
      return diffusion_loss(&tape, logits, batch);
    }
    for (std::size_t s = 0; s < x0.size(); ++s)
      logits.push_back(model.forward_logits(&tape, x0[s], n_real[s],
                                            AttentionMode::kCausal));
    return ar_next_token_loss(&tape, logits, x0, n_real);
  };

  CheckpointMeta meta{cfg.objective, 0, cfg.seed};
  detail::run_stage("pretrain", cfg.pretrain_steps, cfg, model,
                    model.parameters(), micro_loss, log, abort_path, vocab,
                    meta);
}

// Stage 2: contrastive fine-tuning on triplets with bidirectional attention,
// hard negatives plus optional in-batch negatives.
inline void finetune_stage(const RunConfig& cfg, TransformerModel<float>& model,
                           const Vocab& vocab, Rng& rng,
                           std::vector<TrainLogRow>& log,
                           const std::string& abort_path,
                           const std::string& objective_tag) {
  if (cfg.finetune_steps <= 0) return;
  if (cfg.finetune_dataset.empty())
    throw config_error("finetune: no dataset configured");
  auto triplets = load_triplets_jsonl(cfg.finetune_dataset);
  if (triplets.empty())
    throw value_error("finetune: dataset '" + cfg.finetune_dataset +
                      "' holds no triplets");

  if (cfg.lora.enabled) {
    std::vector<std::int32_t> layers;
    for (int l = 0; l < cfg.model.n_layers; ++l) layers.push_back(l);
    Rng lora_rng = rng.split("lora.init");
    model.attach_lora(layers, cfg.lora.rank, cfg.lora.alpha, lora_rng);
    model.freeze_base();
  } else {
    model.set_all_requires_grad(true);
  }

  Rng batch_rng = rng.split("finetune.batch");
  std::vector<std::size_t> order(triplets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = 0;
  batch_rng.shuffle(order);

  EmbedderOptions doc_opt{std::size_t(cfg.max_doc_len), true};

  auto embed_text = [&](Tape<float>& tape, const std::string& instruction,
                        const std::string& text, const EmbedderOptions& opt) {
    FormattedInput f = format_input(instruction, text, vocab, opt);
    Tensor<float> h = model.forward_hidden(&tape, f.tokens, f.n_real,
                                           AttentionMode::kBidirectional);
    return masked_mean_rows(&tape, h, f.pooling_mask);
  };

  auto micro_loss = [&](Tape<float>& tape, int, int) {
    std::vector<const Triplet*> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        batch_rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(&triplets[order[cursor++]]);
    }
    std::vector<AnchorEmbeddings<float>> anchors;
    for (const Triplet* t : batch) {
      AnchorEmbeddings<float> a;
      a.query = embed_text(tape, t->instruction, t->query,
                           EmbedderOptions{std::size_t(cfg.max_input_len),
                                           true});
      a.positive = embed_text(tape, "", t->positive, doc_opt);
      for (const auto& n : t->hard_negatives)
        a.negatives.push_back(embed_text(tape, "", n, doc_opt));
      anchors.push_back(std::move(a));
    }
    // In-batch negatives reuse the other anchors' positives, skipping any
    // whose text matches the anchor's own positive.
    std::vector<std::vector<std::uint8_t>> eligible(
        batch.size(), std::vector<std::uint8_t>(batch.size(), 1));
    for (std::size_t i = 0; i < batch.size(); ++i)
      for (std::size_t j = 0; j < batch.size(); ++j)
        if (batch[j]->positive == batch[i]->positive) eligible[i][j] = 0;
    return infonce_batch_loss(&tape, anchors, cfg.temperature,
                              cfg.in_batch_negatives, &eligible);
  };

  CheckpointMeta meta{objective_tag, 0, cfg.seed};
  detail::run_stage("finetune", cfg.finetune_steps, cfg, model,
                    model.trainable_parameters(), micro_loss, log, abort_path,
                    vocab, meta);
}

// Full pipeline: pretrain then contrastively fine-tune, with one checkpoint
// and one TSV log at the end. Identical seeds give bit-identical checkpoints.
inline TrainOutput train_pipeline(const RunConfig& cfg,
                                  const std::string& out_checkpoint,
                                  const std::string& log_path = "") {
  cfg.validate();
  Vocab vocab = Vocab::synthetic(cfg.model.vocab_size);
  Rng root(cfg.seed);
  Rng init_rng = root.split("init");
  TransformerModel<float> model(cfg.model, init_rng);
  TrainOutput out;
  try {
    pretrain_stage(cfg, model, vocab, root, out.log, out_checkpoint);
    std::string tag = cfg.objective;
    if (cfg.finetune_steps > 0) tag += "+contrastive";
    finetune_stage(cfg, model, vocab, root, out.log, out_checkpoint, tag);
    out.meta = CheckpointMeta{tag, out.log.size(), cfg.seed};
  } catch (const Error&) {
    write_train_log(log_path, out.log);
    throw;
  }
  save_checkpoint(out_checkpoint, model, vocab.words(), out.meta);
  write_train_log(log_path, out.log);
  out.checkpoint_path = out_checkpoint;
  return out;
}

// Stage 2 only, resuming from an existing checkpoint.
inline TrainOutput finetune_from(const RunConfig& cfg_in,
                                 const std::string& in_checkpoint,
                                 const std::string& out_checkpoint,
                                 const std::string& log_path = "") {
  auto loaded = load_checkpoint<float>(in_checkpoint);
  RunConfig cfg = cfg_in;
  cfg.model = loaded.model.config();
  cfg.validate();
  Vocab vocab = Vocab::from_words(loaded.vocab_words);
  Rng root(cfg.seed);
  TrainOutput out;
  std::string tag = loaded.meta.objective + "+contrastive";
  try {
    finetune_stage(cfg, loaded.model, vocab, root, out.log, out_checkpoint,
                   tag);
    out.meta = CheckpointMeta{tag, loaded.meta.step + out.log.size(),
                              cfg.seed};
  } catch (const Error&) {
    write_train_log(log_path, out.log);
    throw;
  }
  save_checkpoint(out_checkpoint, loaded.model, vocab.words(), out.meta);
  write_train_log(log_path, out.log);
  out.checkpoint_path = out_checkpoint;
  return out;
}

}  // namespace mdembed
