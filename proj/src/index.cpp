#include "condel/index.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "condel/error.hpp"

namespace condel {

std::string_view to_string(PredFilter filter) {
  switch (filter) {
    case PredFilter::all:
      return "all";
    case PredFilter::toxic_only:
      return "toxic";
    case PredFilter::nontoxic_only:
      return "nontoxic";
  }
  return "all";
}

std::optional<PredFilter> parse_pred_filter(std::string_view text) {
  if (text == "all" || text.empty()) return PredFilter::all;
  if (text == "toxic" || text == "toxic_only") return PredFilter::toxic_only;
  if (text == "nontoxic" || text == "nontoxic_only") return PredFilter::nontoxic_only;
  return std::nullopt;
}

namespace {

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

InvertedIndex InvertedIndex::build(Corpus corpus) {
  return build(std::make_shared<const Corpus>(std::move(corpus)));
}

InvertedIndex InvertedIndex::build(std::shared_ptr<const Corpus> corpus) {
  if (corpus->comments.size() > std::numeric_limits<DocPos>::max()) {
    throw Error(ErrorKind::invalid, "corpus too large to index");
  }
  InvertedIndex index;
  index.corpus_ = std::move(corpus);
  const auto& comments = index.corpus_->comments;
  for (DocPos pos = 0; pos < comments.size(); ++pos) {
    index.id_lookup_.emplace(comments[pos].id, pos);
    // Positions are visited in ascending order, so appending keeps each list
    // sorted; checking the tail suppresses repeated tokens in one comment.
    for (auto& token : tokenize(comments[pos].text)) {
      auto& list = index.postings_[token.text];
      if (list.empty() || list.back() != pos) list.push_back(pos);
    }
  }
  index.corpus_hash_ = fnv1a(serialize_corpus(*index.corpus_));
  return index;
}

const PostingList& InvertedIndex::postings(std::string_view token) const {
  static const PostingList kEmpty;
  auto it = postings_.find(token);
  return it == postings_.end() ? kEmpty : it->second;
}

std::optional<DocPos> InvertedIndex::find(std::string_view id) const {
  auto it = id_lookup_.find(id);
  if (it == id_lookup_.end()) return std::nullopt;
  return it->second;
}

bool is_normalized_keyword(std::string_view keyword) {
  auto tokens = tokenize(keyword);
  return tokens.size() == 1 && tokens.front().text == keyword;
}

PostingList filtered_matches(const InvertedIndex& index, std::string_view keyword,
                             PredFilter filter) {
  const auto& postings = index.postings(keyword);
  if (filter == PredFilter::all) return postings;
  PostingList out;
  for (DocPos pos : postings) {
    const auto& pred = index.comment(pos).pred;
    if (!pred) continue;
    if (pred->is_toxic() == (filter == PredFilter::toxic_only)) out.push_back(pos);
  }
  return out;
}

SearchPage search(const InvertedIndex& index, std::string_view keyword, PredFilter filter,
                  std::size_t page_index, std::size_t page_size) {
  if (!is_normalized_keyword(keyword)) {
    throw Error(ErrorKind::invalid, "unnormalized keyword", "q");
  }
  if (page_size == 0) throw Error(ErrorKind::invalid, "page_size must be positive", "page_size");

  auto matches = filtered_matches(index, keyword, filter);
  SearchPage page;
  page.total = matches.size();
  page.page_index = page_index;
  page.page_size = page_size;
  // Guard the multiplication so absurd page indexes yield an empty page.
  if (page_index < matches.size() / page_size + 1) {
    std::size_t begin = page_index * page_size;
    std::size_t end = std::min(matches.size(), begin + page_size);
    for (std::size_t i = begin; i < end; ++i) page.items.push_back(index.id_of(matches[i]));
  }
  return page;
}

namespace {

// Uniform integer in [0, bound) by rejection, independent of the standard
// library's distribution implementations.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - (max % bound + 1) % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x > limit);
  return x % bound;
}

}  // namespace

std::vector<std::string> random_sample(const Corpus& corpus, std::size_t k, std::uint64_t seed) {
  const std::size_t n = corpus.comments.size();
  k = std::min(k, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
    std::swap(order[i], order[j]);
    out.push_back(corpus.comments[order[i]].id);
  }
  return out;
}

}  // namespace condel
