#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "mentor/common/rng.hpp"
#include "mentor/model/model.hpp"
#include "mentor/model/tokenizer.hpp"

namespace mentor::testing {

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mentor_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline ModelConfig micro_config(int vocab = 40) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.context_length = 32;
  c.num_layers = 2;
  c.hidden_dim = 32;
  c.num_heads = 4;
  c.seed = 7;
  return c;
}

inline TokenSequence random_sequence(Rng& rng, int length, int vocab) {
  TokenSequence s;
  for (int i = 0; i < length; ++i) {
    const auto tag = i < length / 3 ? Segment::question : Segment::rationale;
    s.append(static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab))), tag);
  }
  return s;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

}  // namespace mentor::testing
