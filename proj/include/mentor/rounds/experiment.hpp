#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "mentor/corpus/cot.hpp"
#include "mentor/corpus/store.hpp"
#include "mentor/corpus/synthetic.hpp"
#include "mentor/model/model.hpp"
#include "mentor/model/tokenizer.hpp"
#include "mentor/rounds/config.hpp"
#include "mentor/teacher/backend.hpp"
#include "mentor/teacher/collect.hpp"
#include "mentor/teacher/prompt.hpp"

namespace mentor {

// Exclusive ownership of an experiment directory for one process.
class ExperimentLock {
 public:
  explicit ExperimentLock(const std::filesystem::path& dir);
  ~ExperimentLock();
  ExperimentLock(const ExperimentLock&) = delete;
  ExperimentLock& operator=(const ExperimentLock&) = delete;

 private:
  std::filesystem::path path_;
};

// An experiment directory:
//   config.resolved.json
//   data/{train,test}.jsonl, bank.jsonl, demos.json, vocab.json, teacher_prompt.json
//   rounds/round_{k}/...
class Experiment {
 public:
  // Materializes data, vocabulary, and the resolved config. An existing
  // directory must carry the same resolved config.
  static Experiment create(const std::filesystem::path& dir, ExperimentConfig config);
  // Throws ResumeError when the directory is not an experiment.
  static Experiment open(const std::filesystem::path& dir);

  const std::filesystem::path& dir() const { return dir_; }
  const ExperimentConfig& config() const { return config_; }
  ExperimentConfig& mutable_config() { return config_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  const std::vector<Sample>& train_samples() const { return train_; }
  const std::vector<Sample>& test_samples() const { return test_; }
  const RationaleBank& bank() const { return bank_; }
  std::span<const Demonstration> demos() const;

  std::filesystem::path round_dir(int round) const;
  bool round_complete(int round) const;

  // Checkpoint of round k, verified against the resolved model config.
  ModelState load_model(int round) const;
  // Store snapshot after round k; round 0 is the empty store.
  DatasetStore load_store(int round) const;

  PromptTemplate prompt_template(bool feedback) const;
  TeacherBackend& backend();
  void set_backend(std::shared_ptr<TeacherBackend> backend) { backend_ = std::move(backend); }
  TeacherCache& cache();

 private:
  Experiment() = default;
  void load_data();

  std::filesystem::path dir_;
  ExperimentConfig config_;
  Tokenizer tokenizer_;
  std::vector<Sample> train_, test_;
  RationaleBank bank_;
  std::vector<Demonstration> all_demos_;
  std::shared_ptr<TeacherBackend> backend_;
  std::unique_ptr<TeacherCache> cache_;
};

// Backend named by the config; credentials come from TEACHER_API_KEY and
// TEACHER_BASE_URL.
std::shared_ptr<TeacherBackend> make_backend(const ExperimentConfig& config,
                                             const RationaleBank& bank);

}  // namespace mentor
