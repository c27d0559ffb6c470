#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mdembed/error.hpp"

namespace mdembed {

namespace detail {

// Fixed word pools for the synthetic vocabulary. Grouped by function so task
// generators can draw structured text: clause words never appear as filler,
// names never collide with content words, and passkey digits are individual
// tokens.
inline const std::vector<std::string>& structural_words() {
  static const std::vector<std::string> w = {"the", "what", "is",  "for",
                                             "passkey", "of", "has", "find"};
  return w;
}

inline const std::vector<std::string>& name_words() {
  static const std::vector<std::string> w = {
      "alice", "bob",    "carol",  "david", "erin",  "frank",  "grace",
      "henry", "iris",   "jack",   "karen", "liam",  "mona",   "noah",
      "olga",  "peter",  "quinn",  "rosa",  "sam",   "tina",   "ursula",
      "victor", "wendy", "xavier", "yara",  "zane",  "boris",  "celia",
      "dmitri", "elena", "felix",  "hugo"};
  return w;
}

inline const std::vector<std::string>& common_words() {
  static const std::vector<std::string> w = {
      "a",    "an",   "to",     "in",     "on",      "with",   "and",
      "or",   "by",   "at",     "from",   "this",    "that",   "it",
      "as",   "be",   "are",    "was",    "were",    "will",   "can",
      "we",   "near", "under",  "over",   "after",   "before", "between",
      "during", "while", "then", "also"};
  return w;
}

inline const std::vector<std::string>& content_words() {
  static const std::vector<std::string> w = {
      "river",   "stone",   "engine",  "garden",  "bridge",  "forest",
      "market",  "castle",  "window",  "mirror",  "copper",  "silver",
      "maple",   "cedar",   "falcon",  "tiger",   "salmon",  "orchid",
      "garnet",  "quartz",  "anchor",  "barrel",  "candle",  "dagger",
      "ember",   "flint",   "goblet",  "hammer",  "ingot",   "jewel",
      "kettle",  "ladder",  "magnet",  "needle",  "oasis",   "pebble",
      "quiver",  "rocket",  "saddle",  "tunnel",  "valley",  "wagon",
      "yarn",    "zephyr",  "acorn",   "badger",  "canyon",  "dolphin",
      "eagle",   "fern",    "glacier", "harbor",  "island",  "jungle",
      "kayak",   "lantern", "meadow",  "nest",    "otter",   "prairie",
      "raven",   "sparrow", "turtle",  "urchin",  "vulture", "walnut",
      "willow",  "wren",    "cliff",   "dune",    "frost",   "galaxy",
      "harvest", "ivory",   "jade",    "kelp",    "lava",    "marble",
      "nickel",  "onyx",    "pearl",   "reef",    "sand",    "thunder",
      "velvet",  "wheat",   "amber",   "basalt",  "cobalt",  "drift",
      "echo",    "fossil",  "gravel",  "horizon", "iceberg", "juniper",
      "krill",   "lichen",  "mineral", "nectar",  "opal",    "pollen",
      "quarry",  "ripple",  "summit",  "trail",   "umbra",   "vapor",
      "wander",  "xylem",   "yield",   "zenith",  "apple",   "banana",
      "carrot",  "date",    "elder",   "fig",     "grape",   "honey",
      "lemon",   "mango",   "nutmeg",  "onion",   "plum",    "quince",
      "radish",  "spice",   "tomato",  "yam",     "azure",   "bronze",
      "crimson", "denim",   "emerald", "fuchsia", "golden",  "hazel",
      "indigo",  "jet",     "khaki",   "lilac",   "magenta", "navy",
      "ochre",   "pink",    "ruby",    "scarlet", "teal",    "umber",
      "violet",  "white",   "yellow",  "black",   "blue",    "green",
      "red",     "orange",  "purple",  "gray",    "circle",  "square",
      "triangle", "hexagon", "sphere", "cube",    "prism",   "cone",
      "spiral",  "arc"};
  return w;
}

}  // namespace detail

// Word-level vocabulary with reserved control tokens. Text is lowercased and
// split into alphanumeric runs; unknown words map to the <unk> token.
class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kMask = 1;
  static constexpr std::int32_t kSep = 2;
  static constexpr std::int32_t kUnk = 3;

  struct Range {
    std::int32_t begin = 0;
    std::int32_t end = 0;  // exclusive
    std::int32_t size() const { return end - begin; }
  };

  // The canonical synthetic layout: reserved tokens, single digits, clause
  // words, entity names, common filler words, then content words.
  static Vocab synthetic(std::size_t size) {
    if (size < 128)
      throw config_error("Vocab::synthetic: size must be at least 128, got " +
                         std::to_string(size));
    std::vector<std::string> words = {"<pad>", "<mask>", "<sep>", "<unk>"};
    for (int d = 0; d < 10; ++d) words.push_back(std::string(1, char('0' + d)));
    auto append = [&](const std::vector<std::string>& group) {
      words.insert(words.end(), group.begin(), group.end());
    };
    append(detail::structural_words());
    append(detail::name_words());
    append(detail::common_words());
    std::size_t content_begin = words.size();
    const auto& content = detail::content_words();
    for (std::size_t i = 0; words.size() < size; ++i) {
      if (i < content.size())
        words.push_back(content[i]);
      else
        words.push_back("item" + std::to_string(i - content.size()));
    }
    Vocab v(std::move(words));
    std::int32_t p = 4;
    v.digits_ = {p, p + 10};
    p += 10;
    v.structural_ = {p, p + std::int32_t(detail::structural_words().size())};
    p = v.structural_.end;
    v.names_ = {p, p + std::int32_t(detail::name_words().size())};
    p = v.names_.end;
    v.common_ = {p, p + std::int32_t(detail::common_words().size())};
    v.content_ = {std::int32_t(content_begin), std::int32_t(v.size())};
    v.has_ranges_ = true;
    return v;
  }

  static Vocab from_words(std::vector<std::string> words) {
    if (words.size() < 4 || words[0] != "<pad>" || words[1] != "<mask>" ||
        words[2] != "<sep>" || words[3] != "<unk>")
      throw format_error("Vocab::from_words: missing reserved control tokens");
    return Vocab(std::move(words));
  }

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(std::int32_t id) const { return words_.at(id); }

  std::int32_t id(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(const std::string& w) const { return index_.count(w) > 0; }

  std::vector<std::int32_t> encode(const std::string& text) const {
    std::vector<std::int32_t> ids;
    std::string run;
    auto flush = [&]() {
      if (!run.empty()) {
        ids.push_back(id(run));
        run.clear();
      }
    };
    for (char c : text) {
      if (std::isalnum(static_cast<unsigned char>(c)))
        run.push_back(char(std::tolower(static_cast<unsigned char>(c))));
      else
        flush();
    }
    flush();
    return ids;
  }

  std::string decode(const std::vector<std::int32_t>& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out.push_back(' ');
      out += word(ids[i]);
    }
    return out;
  }

  bool has_ranges() const { return has_ranges_; }
  Range digit_range() const { return checked(digits_); }
  Range structural_range() const { return checked(structural_); }
  Range name_range() const { return checked(names_); }
  Range common_range() const { return checked(common_); }
  Range content_range() const { return checked(content_); }

 private:
  explicit Vocab(std::vector<std::string> words) : words_(std::move(words)) {
    for (std::size_t i = 0; i < words_.size(); ++i)
      index_.emplace(words_[i], std::int32_t(i));
  }

  Range checked(const Range& r) const {
    if (!has_ranges_)
      throw value_error("Vocab: word-group ranges unavailable for a vocabulary "
                        "restored from a plain word list");
    return r;
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, std::int32_t> index_;
  bool has_ranges_ = false;
  Range digits_, structural_, names_, common_, content_;
};

}  // namespace mdembed
