#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "condel/corpus.hpp"

namespace condel {

// Position of a comment within its corpus. Posting lists hold these rather
// than string ids so set operations stay cheap; `InvertedIndex::id_of`
// translates back.
using DocPos = std::uint32_t;
using PostingList = std::vector<DocPos>;

enum class PredFilter { all, toxic_only, nontoxic_only };

std::string_view to_string(PredFilter filter);
std::optional<PredFilter> parse_pred_filter(std::string_view text);

struct SearchPage {
  std::size_t total = 0;
  std::size_t page_index = 0;
  std::size_t page_size = 0;
  std::vector<std::string> items;  // comment ids in corpus order
};

// Immutable token -> posting-list index over one corpus. The index shares
// ownership of the corpus it was built from.
class InvertedIndex {
 public:
  static InvertedIndex build(std::shared_ptr<const Corpus> corpus);
  static InvertedIndex build(Corpus corpus);

  const Corpus& corpus() const { return *corpus_; }
  const std::shared_ptr<const Corpus>& corpus_ptr() const { return corpus_; }
  std::size_t doc_count() const { return corpus_->comments.size(); }
  // Content hash of the indexed corpus (FNV-1a over its serialized form).
  std::uint64_t corpus_hash() const { return corpus_hash_; }

  // Empty list for unknown tokens.
  const PostingList& postings(std::string_view token) const;
  const std::map<std::string, PostingList, std::less<>>& all_postings() const { return postings_; }

  const Comment& comment(DocPos pos) const { return corpus_->comments[pos]; }
  const std::string& id_of(DocPos pos) const { return corpus_->comments[pos].id; }
  std::optional<DocPos> find(std::string_view id) const;

 private:
  std::shared_ptr<const Corpus> corpus_;
  std::map<std::string, PostingList, std::less<>> postings_;
  std::map<std::string, DocPos, std::less<>> id_lookup_;
  std::uint64_t corpus_hash_ = 0;
};

// True iff `keyword` is already a single lowercase token.
bool is_normalized_keyword(std::string_view keyword);

// Throws Error(invalid) for unnormalized keywords or page_size == 0.
SearchPage search(const InvertedIndex& index, std::string_view keyword, PredFilter filter,
                  std::size_t page_index, std::size_t page_size);

// All filtered matches, in corpus order.
PostingList filtered_matches(const InvertedIndex& index, std::string_view keyword, PredFilter filter);

// k distinct ids drawn uniformly without replacement (all ids when k exceeds
// the corpus size), in draw order. Reproducible for a given seed on every
// platform.
std::vector<std::string> random_sample(const Corpus& corpus, std::size_t k, std::uint64_t seed);

}  // namespace condel
