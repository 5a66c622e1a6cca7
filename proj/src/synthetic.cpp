#include "vctc/synthetic.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include "vctc/error.hpp"

namespace vctc {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

namespace {

enum Stream : std::uint64_t { kEmbeddings = 1, kGrammar = 2, kSplitBase = 100 };

}  // namespace

void SyntheticTaskSpec::validate() const {
  if (vocab_size == 0) throw ConfigError("synthetic task: vocab_size must be positive");
  if (d_in == 0) throw ConfigError("synthetic task: d_in must be positive");
  if (min_segment == 0 || min_segment > max_segment) throw ConfigError("synthetic task: bad segment range");
  if (min_target == 0 || min_target > max_target) throw ConfigError("synthetic task: bad target length range");
  if (noise_std < 0 || utterance_shift_std < 0) throw ConfigError("synthetic task: negative noise");
  if (silence_prob < 0 || silence_prob > 1) throw ConfigError("synthetic task: silence_prob outside [0, 1]");
  if (successors == 0) throw ConfigError("synthetic task: successors must be positive");
  // Worst case: longest target, shortest segments, one separator frame
  // between every pair of tokens.
  if (max_target * min_segment + (max_target - 1) > max_frames) {
    throw ConfigError("synthetic task: max_target x min_segment does not fit in max_frames");
  }
}

Array task_embeddings(const SyntheticTaskSpec& spec) {
  Rng rng(spec.seed, kEmbeddings);
  Array e = sample_standard_normal(rng, {spec.vocab_size, spec.d_in});
  for (double& v : e.data) v *= spec.embedding_scale;
  return e;
}

namespace {

// Row-stochastic successor table of the token grammar.
std::vector<std::vector<double>> grammar(const SyntheticTaskSpec& spec) {
  Rng rng(spec.seed, kGrammar);
  const std::size_t V = spec.vocab_size;
  const std::size_t k = std::min(spec.successors, V);
  std::vector<std::vector<double>> P(V, std::vector<double>(V, 0.15 / static_cast<double>(V)));
  for (std::size_t a = 0; a < V; ++a) {
    std::vector<std::size_t> order(V);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = V - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    for (std::size_t i = 0; i < k; ++i) P[a][order[i]] += 0.85 / static_cast<double>(k);
  }
  return P;
}

std::size_t draw(Rng& rng, const std::vector<double>& probs) {
  double u = rng.uniform();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (u < probs[i]) return i;
    u -= probs[i];
  }
  return probs.size() - 1;
}

std::size_t uniform_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

}  // namespace

Dataset generate_dataset(const SyntheticTaskSpec& spec, std::size_t n, std::uint64_t split, double noise_std,
                         double shift_std) {
  spec.validate();
  const double noise = noise_std >= 0 ? noise_std : spec.noise_std;
  const double shift = shift_std >= 0 ? shift_std : spec.utterance_shift_std;
  const Array emb = task_embeddings(spec);
  const auto P = grammar(spec);
  const std::vector<double> start(spec.vocab_size, 1.0 / static_cast<double>(spec.vocab_size));

  Dataset ds;
  ds.vocab = Vocab::numbered(spec.vocab_size);
  ds.d_in = spec.d_in;
  ds.items.reserve(n);
  Rng rng(spec.seed, kSplitBase + split);

  for (std::size_t u = 0; u < n; ++u) {
    const std::size_t L = uniform_between(rng, spec.min_target, spec.max_target);
    LabelSequence tokens;
    for (std::size_t i = 0; i < L; ++i) {
      tokens.push_back(static_cast<int>(draw(rng, tokens.empty() ? start : P[static_cast<std::size_t>(tokens.back())])));
    }
    // Segment layout: token runs, with a silence run after token i when
    // gaps[i] > 0.
    std::vector<std::size_t> runs(L), gaps(L, 0);
    std::vector<bool> required(L, false);
    for (std::size_t i = 0; i < L; ++i) {
      runs[i] = uniform_between(rng, spec.min_segment, spec.max_segment);
      if (i + 1 < L) {
        required[i] = tokens[i] == tokens[i + 1];
        if (required[i] || rng.uniform() < spec.silence_prob) gaps[i] = uniform_between(rng, 1, spec.min_segment);
      }
    }
    auto total = [&] {
      return std::accumulate(runs.begin(), runs.end(), std::size_t{0}) +
             std::accumulate(gaps.begin(), gaps.end(), std::size_t{0});
    };
    for (std::size_t i = 0; i < L && total() > spec.max_frames; ++i) {
      if (!required[i]) gaps[i] = 0;
    }
    for (std::size_t i = 0; i < L && total() > spec.max_frames; ++i) gaps[i] = std::min<std::size_t>(gaps[i], 1);
    while (total() > spec.max_frames) {
      auto longest = std::max_element(runs.begin(), runs.end());
      if (*longest <= spec.min_segment) throw ConfigError("synthetic task: cannot fit utterance in max_frames");
      --*longest;
    }

    const std::size_t T = total();
    std::vector<double> offset(spec.d_in);
    for (double& o : offset) o = shift * rng.normal();
    Utterance utt;
    utt.labels = tokens;
    utt.features = Array::matrix(T, spec.d_in);
    std::size_t t = 0;
    auto emit = [&](int token, std::size_t frames) {
      for (std::size_t f = 0; f < frames; ++f, ++t) {
        for (std::size_t d = 0; d < spec.d_in; ++d) {
          const double base = token >= 0 ? emb(static_cast<std::size_t>(token), d) : 0.0;
          utt.features(t, d) = base + offset[d] + noise * rng.normal();
        }
      }
    };
    for (std::size_t i = 0; i < L; ++i) {
      emit(tokens[i], runs[i]);
      emit(-1, gaps[i]);
    }
    ds.items.push_back(std::move(utt));
  }
  return ds;
}

namespace {

constexpr char kMagic[8] = {'V', 'C', 'T', 'C', 'D', 'S', 'E', 'T'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("dataset: truncated");
  return v;
}

}  // namespace

void Dataset::write(std::ostream& os) const {
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kFormatVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(d_in));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(vocab.symbol_count()));
  for (const auto& s : vocab.symbols()) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  put<std::uint64_t>(os, items.size());
  for (const Utterance& u : items) {
    detail::require(u.features.cols() == d_in, "Dataset::write: feature width mismatch");
    put<std::uint32_t>(os, static_cast<std::uint32_t>(u.features.rows()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(u.labels.size()));
    os.write(reinterpret_cast<const char*>(u.features.data.data()),
             static_cast<std::streamsize>(u.features.data.size() * sizeof(double)));
    for (int k : u.labels) put<std::uint32_t>(os, static_cast<std::uint32_t>(k));
  }
  if (!os) throw FormatError("dataset: write failed");
}

Dataset Dataset::read(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw FormatError("dataset: bad magic");
  }
  if (const auto v = get<std::uint32_t>(is); v != kFormatVersion) {
    throw FormatError("dataset: unsupported version " + std::to_string(v));
  }
  Dataset ds;
  ds.d_in = get<std::uint32_t>(is);
  const auto V = get<std::uint32_t>(is);
  std::vector<std::string> symbols;
  for (std::uint32_t i = 0; i < V; ++i) {
    const auto len = get<std::uint32_t>(is);
    if (len > 4096) throw FormatError("dataset: implausible symbol length");
    std::string s(len, '\0');
    if (len && !is.read(s.data(), len)) throw FormatError("dataset: truncated");
    symbols.push_back(std::move(s));
  }
  ds.vocab = Vocab(std::move(symbols));
  const auto n = get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    Utterance u;
    const auto T = get<std::uint32_t>(is);
    const auto U = get<std::uint32_t>(is);
    u.features = Array::matrix(T, ds.d_in);
    if (!u.features.data.empty() &&
        !is.read(reinterpret_cast<char*>(u.features.data.data()),
                 static_cast<std::streamsize>(u.features.data.size() * sizeof(double)))) {
      throw FormatError("dataset: truncated frames");
    }
    for (std::uint32_t k = 0; k < U; ++k) {
      const auto tok = get<std::uint32_t>(is);
      if (tok >= V) throw FormatError("dataset: token index out of range");
      u.labels.push_back(static_cast<int>(tok));
    }
    ds.items.push_back(std::move(u));
  }
  return ds;
}

void Dataset::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("dataset: cannot open " + path);
  write(os);
}

Dataset Dataset::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("dataset: cannot open " + path);
  return read(is);
}

}  // namespace vctc
