#ifndef RULELEARN_METRICS_HPP
#define RULELEARN_METRICS_HPP

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "rulelearn/errors.hpp"

namespace rulelearn {

// Filtered rank of the true candidate: 1 + the number of non-filtered
// candidates scoring strictly higher, plus half of the remaining ties
// (mean-rank tie policy, so an all-tied field of 5 ranks 3).
double filtered_rank(const std::vector<double>& scores, int true_candidate,
                     const std::unordered_set<int>& known_true);

double mrr(const std::vector<double>& ranks);
double hits_at_k(const std::vector<double>& ranks, int k);
double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// Known-true triples per predicate, for the filtered ranking protocol.
class KnownTrueIndex {
 public:
  explicit KnownTrueIndex(int num_entities) : n_(num_entities) {}

  void add(int pred, int subj, int obj) {
    if (pred >= static_cast<int>(by_pred_.size())) by_pred_.resize(static_cast<std::size_t>(pred) + 1);
    by_pred_[static_cast<std::size_t>(pred)].insert(key(subj, obj));
  }

  bool contains(int pred, int subj, int obj) const {
    if (pred >= static_cast<int>(by_pred_.size())) return false;
    return by_pred_[static_cast<std::size_t>(pred)].count(key(subj, obj)) > 0;
  }

  // candidates to exclude when ranking the held-out object of (subj, pred, ?)
  std::unordered_set<int> filter_tail(int pred, int subj, int true_obj) const {
    std::unordered_set<int> out;
    for (int w = 0; w < n_; ++w)
      if (w != true_obj && contains(pred, subj, w)) out.insert(w);
    return out;
  }

  std::unordered_set<int> filter_head(int pred, int obj, int true_subj) const {
    std::unordered_set<int> out;
    for (int w = 0; w < n_; ++w)
      if (w != true_subj && contains(pred, w, obj)) out.insert(w);
    return out;
  }

  std::unordered_set<int> filter_unary(int pred, int true_entity) const {
    std::unordered_set<int> out;
    for (int w = 0; w < n_; ++w)
      if (w != true_entity && contains(pred, w, w)) out.insert(w);
    return out;
  }

 private:
  std::uint64_t key(int subj, int obj) const {
    return static_cast<std::uint64_t>(subj) * static_cast<std::uint64_t>(n_) +
           static_cast<std::uint64_t>(obj);
  }

  int n_;
  std::vector<std::unordered_set<std::uint64_t>> by_pred_;
};

}  // namespace rulelearn

#endif
