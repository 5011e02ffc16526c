#include <algorithm>
#include <cctype>
#include <sstream>

#include "momo/denoiser.hpp"
#include "momo/error.hpp"

namespace momo::model {

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
}

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary v({"<unk>",  "<null>", "a",     "person", "walks", "runs",  "jumps",   "stands",
                             "and",    "raises", "both",  "arms",   "hunched", "like", "an",     "old",
                             "man",    "with",   "out",   "robot",  "waves", "chicken", "the",   "in",
                             "place",  "forward", "slowly", "quickly", "steps", "turns", "left",  "right",
                             "hands",  "up",     "his",   "her",    "their", "while", "kicks",   "claps",
                             "dances"});
  return v;
}

std::size_t Vocabulary::id(std::string_view word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocabulary::tokenize(std::string_view text) const {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::istringstream in(lower);
  std::vector<std::size_t> ids;
  std::string w;
  while (in >> w) {
    // "<null>" and "<unk>" are not reachable from text.
    const std::size_t i = id(w);
    ids.push_back(i == kNull ? kUnk : i);
  }
  if (ids.empty()) ids.push_back(kNull);
  return ids;
}

}  // namespace momo::model
