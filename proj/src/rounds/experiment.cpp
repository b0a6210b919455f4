#include "mentor/rounds/experiment.hpp"

#include <cstdio>
#include <cstdlib>

#include "mentor/common/error.hpp"
#include "mentor/common/io.hpp"

namespace mentor {
namespace {

constexpr const char* kResolved = "config.resolved.json";

std::vector<Demonstration> load_demos(const fs::path& path) {
  return read_json(path).get<std::vector<Demonstration>>();
}

}  // namespace

ExperimentLock::ExperimentLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) {
    throw ResumeError("experiment " + dir.string() + " is locked by another process (remove " +
                      path_.string() + " if stale)");
  }
  std::fclose(f);
}

ExperimentLock::~ExperimentLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

Experiment Experiment::create(const fs::path& dir, ExperimentConfig config) {
  config.validate();
  Experiment e;
  e.dir_ = dir;
  const fs::path data = dir / "data";
  fs::create_directories(data);

  std::vector<Sample> train, test;
  RationaleBank bank;
  std::vector<Demonstration> demos;
  if (config.data.source == "synthetic") {
    auto corpus = generate_synthetic(config.data.synthetic);
    train = std::move(corpus.train);
    test = std::move(corpus.test);
    bank = std::move(corpus.bank);
    demos = std::move(corpus.demos);
  } else {
    train = load_samples_jsonl(config.data.train_path);
    test = load_samples_jsonl(config.data.test_path);
    if (!config.data.bank_path.empty()) bank = load_bank_jsonl(config.data.bank_path);
  }
  if (!config.demos.fixture.empty()) demos = load_demos(config.demos.fixture);
  if (static_cast<int>(demos.size()) < config.demos.shots) {
    throw ConfigError("demos.shots = " + std::to_string(config.demos.shots) + " but only " +
                      std::to_string(demos.size()) + " demonstrations are available");
  }
  if (train.empty() || test.empty()) throw ConfigError("train and test sets must be non-empty");

  std::vector<std::string> texts;
  for (const auto* set : {&train, &test}) {
    for (const auto& s : *set) texts.push_back(s.question);
  }
  for (const auto& [id, ts] : bank) texts.insert(texts.end(), ts.begin(), ts.end());
  for (const auto& d : demos) texts.push_back(render_block(d.question, d.rationale, d.answer));
  for (const auto& w : OracleTeacher::lexicon()) texts.push_back(w);
  const Tokenizer tok = Tokenizer::build(texts);
  if (config.model.vocab_size == 0) config.model.vocab_size = tok.size();
  if (config.model.vocab_size != tok.size()) {
    throw ConfigError("model.vocab_size " + std::to_string(config.model.vocab_size) +
                      " differs from the built vocabulary (" + std::to_string(tok.size()) + ")");
  }
  config.model.validate();
  const PromptTemplate tmpl = PromptTemplate::load(config.teacher.prompt_fixture);

  const Json resolved = config;
  const fs::path resolved_path = dir / kResolved;
  if (fs::exists(resolved_path)) {
    if (read_json(resolved_path) != resolved) {
      throw ConfigError(resolved_path.string() + " holds a different configuration");
    }
  } else {
    write_json(resolved_path, resolved);
  }
  write_samples_jsonl(data / "train.jsonl", train);
  write_samples_jsonl(data / "test.jsonl", test);
  write_bank_jsonl((data / "bank.jsonl").string(), bank);
  write_json(data / "demos.json", demos);
  write_json(data / "vocab.json", tok.vocab());
  Json prompt{{"hint_format", tmpl.hint_format},
              {"correction_instruction", tmpl.correction_instruction},
              {"plain_instruction", tmpl.plain_instruction},
              {"blocks", Json::array()}};
  for (const auto& b : tmpl.demo_blocks) {
    prompt["blocks"].push_back({{"question", b.question},
                                {"wrong_solution", b.wrong_solution},
                                {"answer", b.answer},
                                {"better_reasoning", b.better_reasoning}});
  }
  write_json(data / "teacher_prompt.json", prompt);
  return open(dir);
}

Experiment Experiment::open(const fs::path& dir) {
  if (!fs::exists(dir / kResolved)) {
    throw ResumeError("no experiment at " + dir.string() + " (missing " + kResolved + ")");
  }
  Experiment e;
  e.dir_ = dir;
  e.config_ = read_json(dir / kResolved).get<ExperimentConfig>();
  e.config_.validate();
  e.load_data();
  return e;
}

void Experiment::load_data() {
  const fs::path data = dir_ / "data";
  std::vector<std::string> missing;
  for (const char* name : {"train.jsonl", "test.jsonl", "bank.jsonl", "demos.json", "vocab.json",
                           "teacher_prompt.json"}) {
    if (!fs::exists(data / name)) missing.push_back((data / name).string());
  }
  if (!missing.empty()) {
    std::string msg = "experiment data incomplete, missing:";
    for (const auto& m : missing) msg += " " + m;
    throw ResumeError(msg);
  }
  train_ = load_samples_jsonl(data / "train.jsonl");
  test_ = load_samples_jsonl(data / "test.jsonl");
  bank_ = load_bank_jsonl((data / "bank.jsonl").string());
  all_demos_ = load_demos(data / "demos.json");
  tokenizer_ = Tokenizer::from_vocab(read_json(data / "vocab.json").get<std::vector<std::string>>());
  if (tokenizer_.size() != config_.model.vocab_size) {
    throw ResumeError("vocab.json does not match the resolved model vocab_size");
  }
}

std::span<const Demonstration> Experiment::demos() const {
  return std::span(all_demos_).first(static_cast<std::size_t>(config_.demos.shots));
}

fs::path Experiment::round_dir(int round) const {
  return dir_ / "rounds" / ("round_" + std::to_string(round));
}

bool Experiment::round_complete(int round) const {
  return fs::exists(round_dir(round) / "metrics.json");
}

ModelState Experiment::load_model(int round) const {
  const fs::path path = round_dir(round) / "checkpoint.bin";
  if (!fs::exists(path)) throw ResumeError("missing checkpoint " + path.string());
  try {
    return load_checkpoint(read_file(path), config_.model);
  } catch (const CheckpointError& e) {
    throw ResumeError(path.string() + ": " + e.what());
  }
}

DatasetStore Experiment::load_store(int round) const {
  if (round == 0) return DatasetStore(train_);
  const fs::path dir = round_dir(round);
  for (const char* name : {"train.jsonl", "neg.jsonl"}) {
    if (!fs::exists(dir / name)) throw ResumeError("missing store snapshot " + (dir / name).string());
  }
  DatasetStore store = DatasetStore::load(train_, dir);
  store.round = round;
  return store;
}

PromptTemplate Experiment::prompt_template(bool feedback) const {
  PromptTemplate t = PromptTemplate::load(dir_ / "data" / "teacher_prompt.json");
  t.include_feedback = feedback;
  return t;
}

TeacherBackend& Experiment::backend() {
  if (!backend_) backend_ = make_backend(config_, bank_);
  return *backend_;
}

TeacherCache& Experiment::cache() {
  if (!cache_) {
    const fs::path dir = config_.teacher.cache_dir.empty() ? dir_ / "teacher_cache"
                                                           : fs::path(config_.teacher.cache_dir);
    cache_ = std::make_unique<TeacherCache>(dir);
  }
  return *cache_;
}

std::shared_ptr<TeacherBackend> make_backend(const ExperimentConfig& config,
                                             const RationaleBank& bank) {
  if (config.teacher.backend == "oracle") {
    if (bank.empty()) throw ConfigError("oracle teacher needs a rationale bank");
    return std::make_shared<OracleTeacher>(config.teacher.oracle, bank);
  }
  HttpBackendConfig http;
  http.base_url = config.teacher.base_url;
  if (const char* url = std::getenv("TEACHER_BASE_URL"); url && *url) http.base_url = url;
  if (http.base_url.empty()) throw ConfigError("http teacher needs teacher.base_url or TEACHER_BASE_URL");
  if (const char* key = std::getenv("TEACHER_API_KEY")) http.api_key = key;
  http.model = config.teacher.model;
  http.timeout = std::chrono::milliseconds(config.teacher.timeout_ms);
  return std::make_shared<HttpChatBackend>(http);
}

}  // namespace mentor
