#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include <nlohmann/json.hpp>

#include "mdembed/concepts.hpp"
#include "mdembed/error.hpp"
#include "mdembed/prompts.hpp"
#include "mdembed/rng.hpp"
#include "mdembed/vocab.hpp"

namespace mdembed {

struct GenRequest {
  std::string template_id;
  std::map<std::string, std::string> bindings;
  std::uint64_t seed = 0;  // per-item stream; ignored by remote backends
};

struct GenParams {
  std::string model_name = "gpt-4o-mini";
  double temperature = 0.7;
  int max_tokens = 1024;
};

class GeneratorClient {
 public:
  virtual ~GeneratorClient() = default;
  virtual std::string complete(const GenRequest& request) = 0;
  virtual std::string backend_id() const = 0;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Four content words keyed by the concept name alone, so the definition and
// every question about a concept share vocabulary.
inline std::vector<std::string> concept_signature(const std::string& concept_name,
                                                  std::string_view salt = "") {
  const auto& pool = detail::content_words();
  Rng rng(fnv1a(concept_name, fnv1a(salt)));
  std::vector<std::string> out;
  for (auto idx : rng.sample_without_replacement(pool.size(), 4))
    out.push_back(pool[idx]);
  return out;
}

}  // namespace detail

// Offline backend: a pure function of (template id, bindings, seed). Emits
// word-soup questions over the synthetic vocabulary whose signature words are
// keyed by the concept, so contrastive training on stub data carries a signal
// that held-out cluster tasks can measure.
class StubGenerator final : public GeneratorClient {
 public:
  explicit StubGenerator(std::uint64_t seed) : seed_(seed) {}

  std::string backend_id() const override { return "stub"; }

  std::string complete(const GenRequest& request) override {
    // Validate bindings exactly as a remote render would.
    std::string prompt = render_prompt(request.template_id, request.bindings);
    (void)prompt;
    Rng rng(derive_stream(request));
    const std::string theorem = value_or(request.bindings, "theorem");
    const std::string domain = value_or(request.bindings, "domain");

    if (request.template_id == "definition")
      return definition_text(theorem, domain);
    if (request.template_id == "qa_math" || request.template_id == "qa_coding" ||
        request.template_id == "qa_physics") {
      // A small deterministic fraction of items comes out sloppy (solution
      // fails to name the concept) to exercise the quality-check path.
      bool sloppy = rng.uniform_int(16) == 0;
      return "**Problem**\n" + question_text(theorem, rng) + "\n**Solution**\n" +
             solution_text(theorem, rng, !sloppy);
    }
    if (request.template_id == "question_check") {
      const std::string& question = request.bindings.at("question");
      if (ConceptCatalog::mentions(question, theorem)) return "YES";
      Rng rrng(derive_stream(request) ^ 0x9e3779b97f4a7c15ull);
      return "**Problem**\n" + question_text(theorem, rrng) +
             "\n**Solution**\n" + solution_text(theorem, rrng, true);
    }
    if (request.template_id == "solution_check") {
      const std::string& question = request.bindings.at("question");
      const std::string& solution = request.bindings.at("solution");
      if (ConceptCatalog::mentions(question, theorem) ||
          ConceptCatalog::mentions(solution, theorem))
        return "YES";
      return "No";
    }
    if (request.template_id == "hard_negative")
      return negative_text(theorem, rng);
    throw value_error("StubGenerator: no behavior for template '" +
                      request.template_id + "'");
  }

 private:
  static std::string value_or(const std::map<std::string, std::string>& m,
                              const std::string& key) {
    auto it = m.find(key);
    return it == m.end() ? std::string() : it->second;
  }

  std::uint64_t derive_stream(const GenRequest& r) const {
    std::uint64_t h = detail::fnv1a(r.template_id, seed_);
    for (const auto& [k, v] : r.bindings) h = detail::fnv1a(v, detail::fnv1a(k, h));
    return h ^ r.seed;
  }

  static std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) out.push_back(' ');
      out += words[i];
    }
    return out;
  }

  static std::string pick(const std::vector<std::string>& pool, Rng& rng) {
    return pool[rng.uniform_int(pool.size())];
  }

  static std::string digit(Rng& rng) {
    return std::string(1, char('0' + rng.uniform_int(10)));
  }

  static std::string definition_text(const std::string& theorem,
                                     const std::string& domain) {
    auto sig = detail::concept_signature(theorem);
    return theorem + " . in the " + domain + " setting this rule links " +
           sig[0] + " " + sig[1] + " " + sig[2] + " " + sig[3] +
           " so that the " + sig[0] + " of each " + sig[1] + " equals the " +
           sig[2] + " times the " + sig[3];
  }

  // Question text never names the concept; its words are a mix of the
  // concept's signature, cross-concept distractors and digits.
  static std::string question_text(const std::string& theorem, Rng& rng) {
    auto sig = detail::concept_signature(theorem);
    const auto& content = detail::content_words();
    const auto& common = detail::common_words();
    std::vector<std::string> words;
    std::size_t n_sig = 6 + rng.uniform_int(4);
    std::size_t n_distract = 4 + rng.uniform_int(4);
    std::size_t n_common = 3 + rng.uniform_int(3);
    std::size_t n_digits = 1 + rng.uniform_int(3);
    for (std::size_t i = 0; i < n_sig; ++i) words.push_back(pick(sig, rng));
    for (std::size_t i = 0; i < n_distract; ++i)
      words.push_back(pick(content, rng));
    for (std::size_t i = 0; i < n_common; ++i) words.push_back(pick(common, rng));
    for (std::size_t i = 0; i < n_digits; ++i) words.push_back(digit(rng));
    rng.shuffle(words);
    words.insert(words.begin(), "find");
    words.insert(words.begin() + 1, "the");
    return join(words);
  }

  static std::string solution_text(const std::string& theorem, Rng& rng,
                                   bool mention) {
    auto sig = detail::concept_signature(theorem);
    std::vector<std::string> words;
    if (mention) {
      words.push_back("apply");
      words.push_back(theorem);
      words.push_back(".");
    }
    words.push_back("with");
    words.push_back(pick(sig, rng));
    words.push_back(pick(sig, rng));
    words.push_back("we");
    words.push_back("get");
    words.push_back(digit(rng));
    words.push_back(digit(rng));
    words.push_back("so");
    words.push_back("the");
    words.push_back("answer");
    words.push_back("is");
    words.push_back(digit(rng));
    return join(words);
  }

  // Similar surface shape, different (made-up) concept, no overlap with the
  // protected concept's signature words.
  static std::string negative_text(const std::string& theorem, Rng& rng) {
    auto sig = detail::concept_signature(theorem);
    auto foreign = detail::concept_signature(theorem, "negative");
    for (auto& w : foreign) {
      for (const auto& s : sig) {
        if (w == s) {
          const auto& pool = detail::content_words();
          w = pool[(std::find(pool.begin(), pool.end(), w) - pool.begin() + 7) %
                   pool.size()];
        }
      }
    }
    std::vector<std::string> words;
    std::size_t n_sig = 6 + rng.uniform_int(3);
    for (std::size_t i = 0; i < n_sig; ++i) words.push_back(pick(foreign, rng));
    for (std::size_t i = 0; i < 4; ++i)
      words.push_back(pick(detail::common_words(), rng));
    words.push_back(digit(rng));
    rng.shuffle(words);
    words.insert(words.begin(), "find");
    words.insert(words.begin() + 1, "the");
    std::string q = join(words);
    return q + " apply the " + foreign[0] + " " + foreign[1] +
           " rule with " + foreign[2] + " " + foreign[3] + " giving " +
           digit(rng);
  }

  std::uint64_t seed_;
};

// Chat-completion HTTP backend. Endpoint and key come from the environment
// (REASONAUG_API_URL / REASONAUG_API_KEY); requests retry with exponential
// backoff before failing the item.
class HttpGenerator final : public GeneratorClient {
 public:
  HttpGenerator(GenParams params, std::string url, std::string api_key,
                bool verbose = false)
      : params_(std::move(params)), url_(std::move(url)),
        api_key_(std::move(api_key)), verbose_(verbose) {
    split_url();
  }

  static HttpGenerator from_env(GenParams params, bool verbose = false) {
    const char* url = std::getenv("REASONAUG_API_URL");
    if (url == nullptr || *url == '\0')
      throw config_error(
          "remote generation needs REASONAUG_API_URL in the environment");
    const char* key = std::getenv("REASONAUG_API_KEY");
    return HttpGenerator(std::move(params), url, key ? key : "", verbose);
  }

  std::string backend_id() const override {
    return "remote:" + params_.model_name;
  }

  std::string complete(const GenRequest& request) override {
    std::string prompt = render_prompt(request.template_id, request.bindings);
    nlohmann::json body = {
        {"model", params_.model_name},
        {"messages",
         nlohmann::json::array(
             {nlohmann::json{{"role", "user"}, {"content", prompt}}})},
        {"temperature", params_.temperature},
        {"max_tokens", params_.max_tokens}};
    std::string payload = body.dump();
    if (verbose_)
      std::fprintf(stderr, "[reasonaug] POST %s template=%s (key %s)\n%s\n",
                   url_.c_str(), request.template_id.c_str(),
                   api_key_.empty() ? "unset" : "redacted", payload.c_str());

    std::string last_error;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
      if (attempt > 0)
        std::this_thread::sleep_for(
            std::chrono::milliseconds(kBackoffMs << (attempt - 1)));
      httplib::Client client(base_.c_str());
      client.set_read_timeout(60, 0);
      httplib::Headers headers;
      if (!api_key_.empty())
        headers.emplace("Authorization", "Bearer " + api_key_);
      auto res = client.Post(path_.c_str(), headers, payload,
                             "application/json");
      if (!res) {
        last_error = "transport failure (" +
                     std::string(httplib::to_string(res.error())) + ")";
        continue;
      }
      if (res->status != 200) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      try {
        auto j = nlohmann::json::parse(res->body);
        std::string content =
            j.at("choices").at(0).at("message").at("content").get<std::string>();
        if (verbose_)
          std::fprintf(stderr, "[reasonaug] response %zu bytes\n",
                       content.size());
        return content;
      } catch (const nlohmann::json::exception& e) {
        last_error = std::string("bad response payload: ") + e.what();
      }
    }
    throw transport_error("remote generation failed after " +
                          std::to_string(kAttempts) + " attempts: " +
                          last_error);
  }

 private:
  static constexpr int kAttempts = 3;
  static constexpr int kBackoffMs = 500;

  void split_url() {
    auto scheme_end = url_.find("://");
    if (scheme_end == std::string::npos)
      throw config_error("HttpGenerator: URL must start with http:// or "
                         "https://, got '" + url_ + "'");
    auto path_start = url_.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      base_ = url_;
      path_ = "/v1/chat/completions";
    } else {
      base_ = url_.substr(0, path_start);
      path_ = url_.substr(path_start);
    }
  }

  GenParams params_;
  std::string url_, base_, path_, api_key_;
  bool verbose_;
};

}  // namespace mdembed
