#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace vctc {

// Backoff n-gram model over token strings, read from and written to the
// ARPA text layout:
//
//   \data\ header, then one `ngram n=<count>` line per order
//   \1-grams:
//   <log10 prob> <w1> [<log10 backoff>]
//   \2-grams:
//   <log10 prob> <w1> <w2> [<log10 backoff>]
//   ...
//   \end\ terminates the file
//
// Lines starting with '#' and blank lines are ignored. Sentences start with
// <s> and end with </s>.
class NGramLm {
 public:
  static constexpr const char* kBos = "<s>";
  static constexpr const char* kEos = "</s>";

  struct Entry {
    double log10_prob = 0.0;
    double log10_backoff = 0.0;
  };

  using Context = std::vector<std::string>;

  std::size_t order() const { return order_; }

  // Natural-log P(word | context) with standard backoff; only the last
  // order-1 context words are used. Words missing from the unigram table
  // score -inf.
  double log_prob(const Context& context, const std::string& word) const;
  // Sum of log_prob over a sentence including </s>.
  double sentence_log_prob(const std::vector<std::string>& words) const;

  // Vocabulary excluding <s> (it is never predicted).
  std::vector<std::string> predictable_words() const;

  // Largest |1 - sum_w P(w | h)| over every context h stored in the model.
  double max_normalization_error() const;
  // Throws FormatError if max_normalization_error() exceeds tol.
  void validate(double tol = 1e-6) const;

  // Interpolated absolute-discounting estimate written as backoff entries,
  // so each stored context normalizes exactly over the vocabulary. Words in
  // extra_words get unigram mass even if no sentence uses them.
  static NGramLm train(const std::vector<std::vector<std::string>>& sentences, std::size_t order,
                       double discount = 0.5, const std::vector<std::string>& extra_words = {});

  static NGramLm read_arpa(std::istream& is);
  static NGramLm load(const std::string& path);
  void write_arpa(std::ostream& os) const;
  void save(const std::string& path) const;

  const std::map<std::vector<std::string>, Entry>& entries(std::size_t n) const { return tables_.at(n - 1); }

 private:
  std::size_t order_ = 0;
  std::vector<std::map<std::vector<std::string>, Entry>> tables_;  // tables_[n-1] holds n-grams
};

}  // namespace vctc
