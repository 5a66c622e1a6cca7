#include "vctc/ngram_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "vctc/error.hpp"

namespace vctc {

namespace {

constexpr double kLn10 = 2.302585092994045684;
constexpr double kLog10Zero = -99.0;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

double NGramLm::log_prob(const Context& context, const std::string& word) const {
  if (order_ == 0) return -std::numeric_limits<double>::infinity();
  const std::size_t keep = std::min(context.size(), order_ - 1);
  std::vector<std::string> hist(context.end() - static_cast<std::ptrdiff_t>(keep), context.end());
  double backoff = 0.0;
  while (true) {
    std::vector<std::string> key = hist;
    key.push_back(word);
    const auto& table = tables_[key.size() - 1];
    if (auto it = table.find(key); it != table.end()) {
      if (it->second.log10_prob <= kLog10Zero) return -std::numeric_limits<double>::infinity();
      return (backoff + it->second.log10_prob) * kLn10;
    }
    if (hist.empty()) return -std::numeric_limits<double>::infinity();
    const auto& ctx_table = tables_[hist.size() - 1];
    if (auto it = ctx_table.find(hist); it != ctx_table.end()) backoff += it->second.log10_backoff;
    hist.erase(hist.begin());
  }
}

double NGramLm::sentence_log_prob(const std::vector<std::string>& words) const {
  Context ctx{kBos};
  double total = 0.0;
  for (const auto& w : words) {
    total += log_prob(ctx, w);
    ctx.push_back(w);
  }
  return total + log_prob(ctx, kEos);
}

std::vector<std::string> NGramLm::predictable_words() const {
  std::vector<std::string> out;
  if (tables_.empty()) return out;
  for (const auto& [key, e] : tables_[0]) {
    if (key[0] != kBos) out.push_back(key[0]);
  }
  return out;
}

double NGramLm::max_normalization_error() const {
  const auto words = predictable_words();
  auto mass = [&](const Context& ctx) {
    double s = 0.0;
    for (const auto& w : words) {
      const double lp = log_prob(ctx, w);
      if (std::isfinite(lp)) s += std::exp(lp);
    }
    return std::abs(1.0 - s);
  };
  double worst = mass({});
  for (std::size_t n = 1; n < order_; ++n) {
    for (const auto& [key, e] : tables_[n - 1]) {
      if (key.back() == kEos) continue;
      worst = std::max(worst, mass(key));
    }
  }
  return worst;
}

void NGramLm::validate(double tol) const {
  if (order_ == 0) throw FormatError("n-gram LM: empty model");
  const double err = max_normalization_error();
  if (!(err <= tol)) {
    std::ostringstream ss;
    ss << "n-gram LM: conditional distribution off by " << err << " (tolerance " << tol << ")";
    throw FormatError(ss.str());
  }
}

NGramLm NGramLm::train(const std::vector<std::vector<std::string>>& sentences, std::size_t order, double discount,
                       const std::vector<std::string>& extra_words) {
  detail::require(order >= 1, "NGramLm::train: order must be >= 1");
  detail::require(discount > 0.0 && discount < 1.0, "NGramLm::train: discount must be in (0, 1)");
  // counts[n-1][ngram]
  std::vector<std::map<std::vector<std::string>, double>> counts(order);
  std::set<std::string> vocab{kEos};
  for (const auto& w : extra_words) {
    detail::require(w != kBos && w != kEos, "NGramLm::train: boundary token in extra words");
    vocab.insert(w);
  }
  for (const auto& sent : sentences) {
    std::vector<std::string> padded{kBos};
    for (const auto& w : sent) {
      detail::require(w != kBos && w != kEos, "NGramLm::train: sentence contains a boundary token");
      padded.push_back(w);
      vocab.insert(w);
    }
    padded.push_back(kEos);
    for (std::size_t i = 1; i < padded.size(); ++i) {
      for (std::size_t n = 1; n <= order && n <= i + 1; ++n) {
        counts[n - 1][std::vector<std::string>(padded.begin() + static_cast<std::ptrdiff_t>(i + 1 - n),
                                               padded.begin() + static_cast<std::ptrdiff_t>(i + 1))] += 1.0;
      }
    }
  }

  NGramLm lm;
  lm.order_ = order;
  lm.tables_.resize(order);

  // Add-one unigrams over the observed vocabulary.
  double total = 0.0;
  for (const auto& [k, c] : counts[0]) total += c;
  const double denom = total + static_cast<double>(vocab.size());
  for (const auto& w : vocab) {
    auto it = counts[0].find({w});
    const double c = it == counts[0].end() ? 0.0 : it->second;
    lm.tables_[0][{w}] = Entry{std::log10((c + 1.0) / denom), 0.0};
  }
  lm.tables_[0][{kBos}] = Entry{kLog10Zero, 0.0};

  for (std::size_t n = 2; n <= order; ++n) {
    // Context totals and distinct-follower counts.
    std::map<std::vector<std::string>, std::pair<double, double>> ctx_stats;
    for (const auto& [key, c] : counts[n - 1]) {
      auto& st = ctx_stats[std::vector<std::string>(key.begin(), key.end() - 1)];
      st.first += c;
      st.second += 1.0;
    }
    for (const auto& [key, c] : counts[n - 1]) {
      const std::vector<std::string> ctx(key.begin(), key.end() - 1);
      const auto& [ctx_total, followers] = ctx_stats.at(ctx);
      const double lambda = discount * followers / ctx_total;
      const std::vector<std::string> lower_ctx(ctx.begin() + 1, ctx.end());
      const double lower = std::exp(lm.log_prob(lower_ctx, key.back()));
      lm.tables_[n - 1][key] = Entry{std::log10((c - discount) / ctx_total + lambda * lower), 0.0};
    }
    for (const auto& [ctx, st] : ctx_stats) {
      auto it = lm.tables_[n - 2].find(ctx);
      if (it == lm.tables_[n - 2].end()) throw ContractError("NGramLm::train: context missing from lower order");
      it->second.log10_backoff = std::log10(discount * st.second / st.first);
    }
  }
  return lm;
}

NGramLm NGramLm::read_arpa(std::istream& is) {
  NGramLm lm;
  std::map<std::size_t, std::size_t> declared;
  std::string line;
  enum class State { Preamble, Data, Grams, End } state = State::Preamble;
  std::size_t current = 0;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw FormatError("ARPA line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t == "\\data\\") {
      state = State::Data;
      continue;
    }
    if (t == "\\end\\") {
      state = State::End;
      break;
    }
    if (t.size() > 8 && t.front() == '\\' && t.ends_with("-grams:")) {
      if (state == State::Preamble) fail("n-gram section before \\data\\");
      try {
        current = std::stoul(t.substr(1, t.size() - 8));
      } catch (const std::exception&) {
        fail("bad section header");
      }
      if (!declared.count(current)) fail("section for undeclared order");
      state = State::Grams;
      continue;
    }
    if (state == State::Preamble) continue;
    if (state == State::Data) {
      if (!t.starts_with("ngram ")) fail("expected 'ngram N=count'");
      const auto eq = t.find('=');
      if (eq == std::string::npos) fail("expected 'ngram N=count'");
      try {
        declared[std::stoul(t.substr(6, eq - 6))] = std::stoul(t.substr(eq + 1));
      } catch (const std::exception&) {
        fail("bad ngram count");
      }
      continue;
    }
    std::istringstream ss(t);
    std::vector<std::string> fields;
    for (std::string f; ss >> f;) fields.push_back(f);
    if (fields.size() != current + 1 && fields.size() != current + 2) fail("wrong field count");
    Entry e;
    try {
      e.log10_prob = std::stod(fields[0]);
      if (fields.size() == current + 2) e.log10_backoff = std::stod(fields.back());
    } catch (const std::exception&) {
      fail("bad number");
    }
    std::vector<std::string> key(fields.begin() + 1, fields.begin() + 1 + static_cast<std::ptrdiff_t>(current));
    if (lm.tables_.size() < current) lm.tables_.resize(current);
    if (!lm.tables_[current - 1].emplace(std::move(key), e).second) fail("duplicate n-gram");
  }
  if (state != State::End) throw FormatError("ARPA: missing \\end\\");
  if (declared.empty()) throw FormatError("ARPA: no \\data\\ section");
  lm.order_ = declared.rbegin()->first;
  lm.tables_.resize(lm.order_);
  for (const auto& [n, count] : declared) {
    if (n == 0 || n > lm.order_) throw FormatError("ARPA: bad order in header");
    if (lm.tables_[n - 1].size() != count) {
      throw FormatError("ARPA: " + std::to_string(n) + "-gram count does not match header");
    }
  }
  return lm;
}

NGramLm NGramLm::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open LM file " + path);
  NGramLm lm = read_arpa(is);
  lm.validate();
  return lm;
}

void NGramLm::write_arpa(std::ostream& os) const {
  os << "\\data\\\n";
  for (std::size_t n = 1; n <= order_; ++n) os << "ngram " << n << "=" << tables_[n - 1].size() << "\n";
  os << std::setprecision(12);
  for (std::size_t n = 1; n <= order_; ++n) {
    os << "\n\\" << n << "-grams:\n";
    for (const auto& [key, e] : tables_[n - 1]) {
      os << e.log10_prob;
      for (const auto& w : key) os << ' ' << w;
      if (n < order_) os << ' ' << e.log10_backoff;
      os << '\n';
    }
  }
  os << "\n\\end\\\n";
}

void NGramLm::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write LM file " + path);
  write_arpa(os);
}

}  // namespace vctc
