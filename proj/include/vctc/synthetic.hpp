#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "vctc/ctc.hpp"
#include "vctc/numerics.hpp"

namespace vctc {

// Order-preserving toy task standing in for speech: every target token is
// rendered as a run of noisy copies of its embedding vector, runs appear in
// target order, and optional silence runs sit between them.
struct SyntheticTaskSpec {
  std::size_t vocab_size = 8;
  std::size_t min_segment = 2;
  std::size_t max_segment = 5;
  std::size_t min_target = 2;
  std::size_t max_target = 6;
  std::size_t max_frames = 48;
  double noise_std = 0.6;
  // Per-utterance random offset added to every frame (speaker/channel-like).
  double utterance_shift_std = 0.3;
  // Chance of a silence run between two distinct tokens. Repeated tokens are
  // always separated by silence.
  double silence_prob = 0.3;
  double embedding_scale = 1.0;
  std::size_t d_in = 32;
  // Token sequences follow a random first-order Markov chain in which each
  // token has this many likely successors.
  std::size_t successors = 3;
  std::uint64_t seed = 1;

  // Throws ConfigError for inconsistent ranges or a frame budget that cannot
  // hold the longest target at the shortest segment length.
  void validate() const;
};

struct Utterance {
  Array features;  // T_in x d_in
  LabelSequence labels;
};

// Dataset container. File layout (little-endian):
//
//   bytes 0..7  magic "VCTCDSET"
//   u32         format version (currently 1)
//   u32         d_in
//   u32         symbol count V, then V x { u32 length, bytes }
//   u64         utterance count N
//   N x         { u32 T_in, u32 T_out, T_in * d_in x f64 row-major frames,
//                 T_out x u32 token index }
struct Dataset {
  static constexpr std::uint32_t kFormatVersion = 1;

  Vocab vocab;
  std::size_t d_in = 0;
  std::vector<Utterance> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }

  void write(std::ostream& os) const;
  static Dataset read(std::istream& is);
  void save(const std::string& path) const;
  static Dataset load(const std::string& path);
};

// Draws n utterances. `split` selects an independent stream so train, dev
// and test sets share embeddings and grammar but not samples. noise_std and
// shift_std override the task's values when non-negative.
Dataset generate_dataset(const SyntheticTaskSpec& spec, std::size_t n, std::uint64_t split = 0,
                         double noise_std = -1.0, double shift_std = -1.0);

// Token embeddings shared by every split of a task (vocab_size x d_in).
Array task_embeddings(const SyntheticTaskSpec& spec);

}  // namespace vctc
