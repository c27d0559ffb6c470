#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mdembed/error.hpp"
#include "mdembed/model.hpp"
#include "mdembed/tensor.hpp"
#include "mdembed/vocab.hpp"

namespace mdembed {

template <typename S>
struct EmbeddingVector {
  std::vector<S> values;
  AttentionMode source_mode = AttentionMode::kBidirectional;
  bool normalized = false;
};

// Tokenized model input plus the pooling mask that selects which positions
// contribute to the mean-pooled embedding.
struct FormattedInput {
  std::vector<std::int32_t> tokens;
  std::size_t n_real = 0;
  std::vector<std::uint8_t> pooling_mask;
  bool truncated = false;
};

struct EmbedderOptions {
  std::size_t max_len = 128;
  // Instruction tokens participate in mean pooling by default; flip this to
  // pool over the text span only.
  bool pool_instruction = true;
};

// Builds "[instruction] <sep> [text]" token ids. Truncation keeps the text
// prefix and never shortens the instruction; an instruction that leaves no
// room for text is an error.
inline FormattedInput format_input(const std::string& instruction,
                                   const std::string& text, const Vocab& vocab,
                                   const EmbedderOptions& opt) {
  std::vector<std::int32_t> text_ids = vocab.encode(text);
  if (text_ids.empty())
    throw value_error("format_input: text tokenizes to nothing");
  std::vector<std::int32_t> instr_ids =
      instruction.empty() ? std::vector<std::int32_t>{}
                          : vocab.encode(instruction);
  FormattedInput out;
  std::size_t prefix = instr_ids.empty() ? 0 : instr_ids.size() + 1;
  if (prefix + 1 > opt.max_len)
    throw value_error("format_input: instruction alone exceeds max length " +
                      std::to_string(opt.max_len));
  std::size_t text_keep = std::min(text_ids.size(), opt.max_len - prefix);
  out.truncated = text_keep < text_ids.size();
  out.tokens = instr_ids;
  if (!instr_ids.empty()) out.tokens.push_back(Vocab::kSep);
  out.tokens.insert(out.tokens.end(), text_ids.begin(),
                    text_ids.begin() + text_keep);
  out.n_real = out.tokens.size();
  out.pooling_mask.assign(out.tokens.size(), 1);
  if (!opt.pool_instruction)
    for (std::size_t i = 0; i < prefix; ++i) out.pooling_mask[i] = 0;
  return out;
}

// Arithmetic mean over the poolable rows of a hidden-state matrix.
template <typename S>
EmbeddingVector<S> mean_pool(const Tensor<S>& hidden,
                             const std::vector<std::uint8_t>& pooling_mask,
                             AttentionMode mode) {
  Tensor<S> pooled = masked_mean_rows<S>(nullptr, hidden, pooling_mask);
  EmbeddingVector<S> out;
  out.values = pooled.value();
  out.source_mode = mode;
  return out;
}

// Plain cosine on value vectors, clamped against rounding drift.
template <typename S>
double cosine_similarity(const std::vector<S>& a, const std::vector<S>& b) {
  if (a.size() != b.size())
    throw shape_error("cosine_similarity: dimension mismatch " +
                      std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * double(b[i]);
    na += double(a[i]) * double(a[i]);
    nb += double(b[i]) * double(b[i]);
  }
  if (na == 0.0 || nb == 0.0)
    throw value_error("cosine_similarity: zero vector, cosine undefined");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

template <typename S>
double cosine_similarity(const EmbeddingVector<S>& a,
                         const EmbeddingVector<S>& b) {
  return cosine_similarity(a.values, b.values);
}

struct EmbedInput {
  std::string text;
  std::string instruction;  // empty = none
};

// Text-embedding front end over a trained model: instruction formatting,
// forward pass, mean pooling. Embeddings are stored unnormalized; cosine
// handles normalization at comparison time.
template <typename S>
class Embedder {
 public:
  Embedder(const TransformerModel<S>& model, Vocab vocab, EmbedderOptions opt)
      : model_(model), vocab_(std::move(vocab)), opt_(opt) {}

  const Vocab& vocab() const { return vocab_; }
  const EmbedderOptions& options() const { return opt_; }
  const TransformerModel<S>& model() const { return model_; }
  std::size_t dim() const { return model_.config().d_model; }

  EmbeddingVector<S> embed(const EmbedInput& input, AttentionMode mode) const {
    FormattedInput f = format_input(input.instruction, input.text, vocab_, opt_);
    Tensor<S> hidden =
        model_.forward_hidden(nullptr, f.tokens, f.n_real, mode);
    return mean_pool(hidden, f.pooling_mask, mode);
  }

  // Row i is the standalone embedding of input i; sequences run at natural
  // length, so batch composition cannot perturb results. Fans out across
  // threads with read-only model access when asked to.
  std::vector<EmbeddingVector<S>> embed_batch(
      const std::vector<EmbedInput>& inputs, AttentionMode mode,
      int threads = 1) const {
    std::vector<EmbeddingVector<S>> out(inputs.size());
    auto work = [&](std::size_t begin, std::size_t end,
                    std::exception_ptr& err) {
      for (std::size_t i = begin; i < end; ++i) {
        try {
          out[i] = embed(inputs[i], mode);
        } catch (const std::exception& e) {
          err = std::make_exception_ptr(
              value_error("embed_batch: input " + std::to_string(i) +
                          " failed: " + e.what()));
          return;
        }
      }
    };
    if (threads <= 1 || inputs.size() < 2) {
      std::exception_ptr err;
      work(0, inputs.size(), err);
      if (err) std::rethrow_exception(err);
      return out;
    }
    std::size_t n_threads = std::min<std::size_t>(threads, inputs.size());
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(n_threads);
    std::size_t chunk = (inputs.size() + n_threads - 1) / n_threads;
    for (std::size_t k = 0; k < n_threads; ++k) {
      std::size_t b = k * chunk, e = std::min(inputs.size(), b + chunk);
      if (b >= e) break;
      pool.emplace_back(work, b, e, std::ref(errs[k]));
    }
    for (auto& th : pool) th.join();
    for (auto& err : errs)
      if (err) std::rethrow_exception(err);
    return out;
  }

 private:
  const TransformerModel<S>& model_;
  Vocab vocab_;
  EmbedderOptions opt_;
};

struct ExportItem {
  std::string id;
  std::string label;
  std::string text;
  std::string instruction;
};

// CSV export of embeddings: header "id,label,v0..v{d-1}", one row per item,
// values printed with 9 significant digits. Byte-reproducible for identical
// model and inputs.
template <typename S>
void export_embeddings(const Embedder<S>& embedder,
                       const std::vector<ExportItem>& items,
                       AttentionMode mode, const std::string& path,
                       int threads = 1) {
  for (const auto& it : items)
    if (it.id.find_first_of(",\n\r") != std::string::npos ||
        it.label.find_first_of(",\n\r") != std::string::npos)
      throw value_error("export_embeddings: id/label must not contain commas "
                        "or newlines ('" + it.id + "')");
  std::vector<EmbedInput> inputs;
  inputs.reserve(items.size());
  for (const auto& it : items) inputs.push_back({it.text, it.instruction});
  std::vector<EmbeddingVector<S>> embs =
      embedder.embed_batch(inputs, mode, threads);

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("export_embeddings: cannot open '" + path + "'");
  out << "id,label";
  for (std::size_t j = 0; j < embedder.dim(); ++j) out << ",v" << j;
  out << "\n";
  char buf[64];
  for (std::size_t i = 0; i < items.size(); ++i) {
    out << items[i].id << "," << items[i].label;
    for (S v : embs[i].values) {
      std::snprintf(buf, sizeof(buf), "%.9g", double(v));
      out << "," << buf;
    }
    out << "\n";
  }
  if (!out) throw io_error("export_embeddings: write failed for '" + path + "'");
}

}  // namespace mdembed
