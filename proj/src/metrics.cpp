#include "rulelearn/metrics.hpp"

namespace rulelearn {

double filtered_rank(const std::vector<double>& scores, int true_candidate,
                     const std::unordered_set<int>& known_true) {
  require(true_candidate >= 0 && true_candidate < static_cast<int>(scores.size()),
          Errc::IndexOutOfRange, "true candidate outside score vector");
  require(known_true.count(true_candidate) == 0, Errc::IndexOutOfRange,
          "the true candidate must not be filtered");
  double s = scores[static_cast<std::size_t>(true_candidate)];
  int better = 0, tied = 0;
  for (int w = 0; w < static_cast<int>(scores.size()); ++w) {
    if (w == true_candidate || known_true.count(w)) continue;
    double x = scores[static_cast<std::size_t>(w)];
    if (x > s)
      ++better;
    else if (x == s)
      ++tied;
  }
  // ranks of the tie group are better+1 .. better+tied+1; report their mean
  return better + 1 + tied / 2.0;
}

double mrr(const std::vector<double>& ranks) {
  require(!ranks.empty(), Errc::EmptyInput, "mrr of empty rank list");
  double s = 0;
  for (double r : ranks) s += 1.0 / r;
  return s / static_cast<double>(ranks.size());
}

double hits_at_k(const std::vector<double>& ranks, int k) {
  require(!ranks.empty(), Errc::EmptyInput, "hits@k of empty rank list");
  int hit = 0;
  for (double r : ranks)
    if (r <= static_cast<double>(k)) ++hit;
  return static_cast<double>(hit) / static_cast<double>(ranks.size());
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  require(!predictions.empty() && predictions.size() == labels.size(), Errc::EmptyInput,
          "accuracy needs matching nonempty vectors");
  int correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

}  // namespace rulelearn
