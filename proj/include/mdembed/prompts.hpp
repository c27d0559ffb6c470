#pragma once

#include <map>
#include <string>
#include <vector>

#include "mdembed/error.hpp"

namespace mdembed {

// A text template with {name} placeholders. Rendering substitutes in a
// single pass: placeholder braces inside a binding's value pass through
// literally, and template text itself contains no literal braces.
struct PromptTemplate {
  std::string id;
  std::string text;
  std::vector<std::string> placeholders;
};

namespace detail {

inline std::vector<std::string> extract_placeholders(const std::string& text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    auto close = text.find('}', i);
    if (close == std::string::npos)
      throw format_error("PromptTemplate: unterminated '{' at offset " +
                         std::to_string(i));
    std::string name = text.substr(i + 1, close - i - 1);
    if (name.empty())
      throw format_error("PromptTemplate: empty placeholder name");
    bool seen = false;
    for (const auto& p : out) seen = seen || p == name;
    if (!seen) out.push_back(name);
    i = close;
  }
  return out;
}

}  // namespace detail

// The generation, quality-check and hard-negative templates used by the data
// synthesis pipeline.
class PromptLibrary {
 public:
  static const PromptLibrary& instance() {
    static PromptLibrary lib;
    return lib;
  }

  const PromptTemplate& get(const std::string& id) const {
    auto it = templates_.find(id);
    if (it == templates_.end())
      throw value_error("PromptLibrary: unknown template '" + id + "'");
    return it->second;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& [id, t] : templates_) out.push_back(id);
    return out;
  }

 private:
  PromptLibrary() {
    add("definition", R"(Your task is to provide a definition for the {domain}: {theorem}. Write the equation in LaTex format.

Here are some examples:
**Concept**
Pigeonhole Principle
**Definition**
Let S be a finite set whose cardinality is n. Let S_1, S_2, ..., S_k be a partition of S into k subsets. Then, at least one subset S_i of S contains at least ceil(n/k) elements, where ceil denotes the ceiling function.

Here is your task:
**Concept**
{theorem}
**Definition**
)");

    add("question_check", R"(**Question**
{question}

Is this problem testing or requiring {domain} {theorem}? If yes, please answer "YES". If no, please response with a new problem and solution about {theorem} with similar context and difficulty. Do not provide any explanation.
)");

    add("solution_check", R"(**Question**
{question}
**Solution**
{solution}

Is this a correct solution to the problem and using the {domain} {theorem}? Response "YES" or "No".
)");

    add("qa_math", R"(Your task is to create one {question_type} problem with a correct solution.

- The problem should be new and unique, not similar to common existing problems.
- {style_constraint}
- The problem should involve numerical operations.
- Most importantly, the problem should require or test about the {domain}: {theorem}.
- The problem should not explicitly mentioning {theorem}.
- The problem should be as difficult as {difficulty}.
- The problem should be solved {solving_style}.
- The solution should include reasoning or calculation steps.

Write the problem after the **Problem** tag and the solution after the **Solution** tag. Do not write any explanation.
)");

    add("qa_coding", R"(Your task is to create one {question_type} problem with a correct solution.

- The problem should be new and unique, not similar to common existing problems.
- {style_constraint}
- Most importantly, the problem should require or test about the {domain}: {theorem}.
- The problem should be as difficult as {difficulty}.
- The solution code should be written in the programming language {language}.

Write the problem after the **Problem** tag and the solution after the **Solution** tag. Do not write any explanation.
)");

    add("qa_physics", R"(Your task is to create one {question_type} problem with a correct solution.

- The problem should be new and unique, not similar to common existing problems.
- {style_constraint}
- Most importantly, the problem should require or test about the {domain}: {theorem}.
- The problem should be as difficult as {difficulty}.
- The problem should be solved {solving_style}.
- The solution should include reasoning or calculation steps.

Write the problem after the **Problem** tag and the solution after the **Solution** tag. Do not write any explanation.
)");

    add("hard_negative", R"(You have been assigned a retrieval task: {instruction}

You will be given a user query and a positive document. Your mission is to write one hard negative document. The hard negative document must:
- Have the similar context background as the user query but test or require a different {domain}.
- Follow the format of the positive document.
- Should not be related to {theorem}.
- Should not be helpful for solving the user query problem.

**User Query**
{query}

**Positive Document**
{pos}

Directly response with the content of hard negative document.
**Hard Negative Document**
)");
  }

  void add(std::string id, std::string text) {
    PromptTemplate t;
    t.id = id;
    t.placeholders = detail::extract_placeholders(text);
    t.text = std::move(text);
    templates_.emplace(std::move(id), std::move(t));
  }

  std::map<std::string, PromptTemplate> templates_;
};

// Byte-exact single-pass substitution. Every placeholder must be bound;
// unknown bindings are ignored.
inline std::string render_prompt(
    const std::string& template_id,
    const std::map<std::string, std::string>& bindings) {
  const PromptTemplate& t = PromptLibrary::instance().get(template_id);
  std::string out;
  out.reserve(t.text.size());
  for (std::size_t i = 0; i < t.text.size(); ++i) {
    if (t.text[i] != '{') {
      out.push_back(t.text[i]);
      continue;
    }
    auto close = t.text.find('}', i);
    std::string name = t.text.substr(i + 1, close - i - 1);
    auto it = bindings.find(name);
    if (it == bindings.end())
      throw value_error("render_prompt: unbound placeholder '" + name +
                        "' in template '" + template_id + "'");
    out += it->second;
    i = close;
  }
  return out;
}

}  // namespace mdembed
