// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "helpers.hpp"
#include "mentor/cli/config_file.hpp"
#include "mentor/common/digest.hpp"
#include "mentor/common/error.hpp"
#include "mentor/common/io.hpp"
#include "mentor/model/inference.hpp"
#include "mentor/rounds/pipeline.hpp"
#include "mentor/tailor/loss.hpp"

using namespace mentor;
using mentor::testing::TempDir;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kSource = MENTOR_SOURCE_DIR;

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int n, const std::string& title, const std::function<Verdict()>& check) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!v.pass) ++failures;
  std::printf("%s criterion %d: %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", n, title.c_str(),
              v.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::size_t count_of(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string_view::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

std::string file_digest(const fs::path& p) { return to_hex(sha256(read_file(p))); }

// --- 1 ------------------------------------------------------------------

Verdict gradient_check() {
  const auto t0 = Clock::now();
  ModelConfig c;
  c.vocab_size = 128;
  c.context_length = 32;
  c.num_layers = 2;
  c.hidden_dim = 32;
  c.num_heads = 4;
  c.seed = 11;
  const ModelState m = init_model(c);
  Rng rng(2024);
  TokenSequence seq = mentor::testing::random_sequence(rng, 20, c.vocab_size);
  for (int i = 0; i < 4; ++i) seq.tags[static_cast<std::size_t>(i)] = Segment::demo;
  const TripletPaths tp{mentor::testing::random_sequence(rng, 9, c.vocab_size),
                        mentor::testing::random_sequence(rng, 14, c.vocab_size),
                        mentor::testing::random_sequence(rng, 11, c.vocab_size)};
  const LossConfig cfg;  // rho 1, lambda 0.5
  const double lm = lm_loss(m, seq, cfg.demo_weight);
  const double joint = joint_loss(m, seq, tp, cfg);
  if (!(joint > lm)) return {false, "triplet hinge inactive at the probe point"};

  const Engine<double> engine(m);
  const auto g = gradients(m, joint_graph(engine, seq, std::optional(tp), cfg));
  ModelState p = m;
  const double h = 1e-5;
  double err2 = 0.0, ref2 = 0.0, worst = 0.0;
  std::size_t checked = 0;
  for (const auto& t : m.layout.tensors()) {
    const std::size_t stride = std::max<std::size_t>(1, t.size / 48);
    for (std::size_t k = 0; k < t.size; k += stride) {
      const std::size_t i = t.offset + k;
      const double orig = p.values[i];
      p.values[i] = orig + h;
      const double up = joint_loss(p, seq, tp, cfg);
      p.values[i] = orig - h;
      const double dn = joint_loss(p, seq, tp, cfg);
      p.values[i] = orig;
      const double fd = (up - dn) / (2 * h);
      const double diff = fd - g.values[i];
      err2 += diff * diff;
      ref2 += std::max(fd * fd, g.values[i] * g.values[i]);
      worst = std::max(worst, std::abs(diff) / std::max({std::abs(fd), std::abs(g.values[i]), 1e-3}));
      ++checked;
    }
  }
  const double rel = std::sqrt(err2 / ref2);
  const double secs = seconds_since(t0);
  return {rel < 1e-4 && worst < 1e-4 && secs < 60.0,
          fmt("%zu coordinates across all tensors, relative error %.2e, worst coordinate %.2e, %.1f s",
              checked, rel, worst, secs)};
}

// --- 2 ------------------------------------------------------------------

Verdict loss_identities() {
  ModelConfig c;
  c.vocab_size = 97;
  c.context_length = 32;
  c.num_layers = 2;
  c.hidden_dim = 32;
  c.num_heads = 4;
  ModelState uniform = init_model(c);
  for (auto& v : uniform.tensor("head.w")) v = 0.0;
  for (auto& v : uniform.tensor("head.b")) v = 0.0;
  Rng rng(3);
  const auto seq = mentor::testing::random_sequence(rng, 16, c.vocab_size);
  const double uni = lm_loss(uniform, seq, 0.1);
  const double uni_err = std::abs(uni - std::log(97.0));

  const std::vector<double> a{1, 0}, p{0, 1}, n{1, 0};
  const double trip = triplet_loss(a, p, n, 1.0);

  const ModelState m = init_model(c);
  const TripletPaths tp{mentor::testing::random_sequence(rng, 7, c.vocab_size),
                        mentor::testing::random_sequence(rng, 8, c.vocab_size),
                        mentor::testing::random_sequence(rng, 9, c.vocab_size)};
  LossConfig zero;
  zero.lambda = 0.0;
  const double lm = lm_loss(m, seq, zero.demo_weight);
  const double joint0 = joint_loss(m, seq, tp, zero);
  const bool bitwise = std::memcmp(&lm, &joint0, sizeof lm) == 0;
  return {uni_err < 1e-12 && std::abs(trip - 2.0) < 1e-12 && bitwise,
          fmt("|L_lm(uniform) - ln 97| = %.1e, triplet{0,2,0} = %.17g, joint(lambda=0) %s L_lm", uni_err,
              trip, bitwise ? "==" : "!=")};
}

// --- 4 ------------------------------------------------------------------

struct ReferenceRun {
  TempDir dir{"acc_reference"};
  std::vector<RoundMetrics> history;
  double seconds = 0.0;
};

Verdict reference_run(ReferenceRun& run) {
  const ExperimentConfig cfg = load_config_file((kSource / "configs" / "reference.toml").string());
  const auto t0 = Clock::now();
  Experiment exp = Experiment::create(run.dir.path(), cfg);
  run.history = run_pipeline(exp);
  run.seconds = seconds_since(t0);
  const auto& h = run.history;
  if (h.size() < 3) return {false, fmt("only %zu rounds ran", h.size())};
  const double acc0 = h[0].test_accuracy, acc1 = h[1].test_accuracy, acc2 = h[2].test_accuracy;
  const double er0 = h[0].train_error_rate, er1 = h[1].train_error_rate, er2 = h[2].train_error_rate;
  const bool ok = acc0 < 10.0 && acc1 - acc0 >= 20.0 && er0 - er1 >= 30.0 && er2 <= er1 &&
                  run.seconds < 900.0;
  return {ok, fmt("accuracy %.2f -> %.2f -> %.2f, train ER %.2f -> %.2f -> %.2f, %.0f s", acc0, acc1,
                  acc2, er0, er1, er2, run.seconds)};
}

// --- 3 ------------------------------------------------------------------

Verdict soundness(const ReferenceRun& run, const fs::path& ablation_dir) {
  const Experiment exp = Experiment::open(run.dir.path());
  std::size_t retained = 0, sound = 0;
  for (int k = 1; exp.round_complete(k); ++k) {
    const DatasetStore store = exp.load_store(k);
    read_jsonl(exp.round_dir(k) / "teacher_exchanges.jsonl", [&](std::size_t, const Json& x) {
      for (const auto& r : x.at("retained")) {
        const auto rec = r.get<RationaleRecord>();
        const Sample& s = store.sample(rec.sample_id);
        ++retained;
        if (extract_answer(rec.text, s.task_type) == s.gold_answer) ++sound;
      }
    });
    for (const auto& r : store.train()) {
      const Sample& s = store.sample(r.sample_id);
      ++retained;
      if (extract_answer(r.text, s.task_type) == s.gold_answer) ++sound;
    }
  }

  // Feedback ablation over a whole run.
  ExperimentConfig cfg = load_config_file((kSource / "configs" / "smoke.toml").string());
  cfg.teacher.feedback_enabled = false;
  Experiment ab = Experiment::create(ablation_dir, cfg);
  run_pipeline(ab);
  std::size_t prompts = 0, wrong = 0;
  for (int k = 1; ab.round_complete(k); ++k) {
    read_jsonl(ab.round_dir(k) / "teacher_exchanges.jsonl", [&](std::size_t, const Json& x) {
      ++prompts;
      wrong += count_of(x.at("request").at("prompt").get<std::string>(), "Wrong Solution");
    });
  }
  const bool ok = retained > 0 && sound == retained && prompts > 0 && wrong == 0;
  return {ok, fmt("%zu/%zu stored teacher rationales match gold; ablation: %zu prompts, %zu \"Wrong "
                  "Solution\" occurrences",
                  sound, retained, prompts, wrong)};
}

// --- 5, 6 ---------------------------------------------------------------

struct Sweep {
  std::vector<SweepRow> rows;
  const SweepRow& at(double lambda) const {
    for (const auto& r : rows) {
      if (r.lambda == lambda) return r;
    }
    throw LookupError("no sweep row for lambda");
  }
};

Verdict reflection_direction(const Sweep& s) {
  const auto& z = s.at(0.0);
  const auto& h = s.at(0.5);
  return {h.preference > z.preference && h.distance > z.distance,
          fmt("preference %.2f -> %.2f, distance %.4f -> %.4f (lambda 0 -> 0.5)", z.preference,
              h.preference, z.distance, h.distance)};
}

Verdict heavy_lambda(const Sweep& s) {
  const auto& h = s.at(0.5);
  const auto& t = s.at(2.0);
  return {t.final_lm >= h.final_lm,
          fmt("final L_lm %.6f at lambda 2.0 vs %.6f at lambda 0.5", t.final_lm, h.final_lm)};
}

// --- 7 ------------------------------------------------------------------

Verdict determinism(const fs::path& root) {
  ExperimentConfig cfg = load_config_file((kSource / "configs" / "smoke.toml").string());
  cfg.teacher.cache_dir = (root / "shared_cache").string();
  {
    Experiment warm = Experiment::create(root / "warmup", cfg);
    run_pipeline(warm);
  }
  std::size_t calls[2] = {0, 0};
  const char* names[2] = {"a", "b"};
  for (int i = 0; i < 2; ++i) {
    Experiment exp = Experiment::create(root / names[i], cfg);
    auto backend = make_backend(exp.config(), exp.bank());
    exp.set_backend(backend);
    run_pipeline(exp);
    calls[i] = backend->calls();
  }
  std::size_t compared = 0, equal = 0;
  for (int k = 0;; ++k) {
    const auto a = root / "a" / "rounds" / ("round_" + std::to_string(k));
    const auto b = root / "b" / "rounds" / ("round_" + std::to_string(k));
    if (!fs::exists(a / "metrics.json")) break;
    for (const char* f : {"metrics.json", "checkpoint.bin"}) {
      ++compared;
      if (fs::exists(b / f) && file_digest(a / f) == file_digest(b / f)) ++equal;
    }
  }
  const bool ok = compared >= 6 && equal == compared && calls[0] == 0 && calls[1] == 0;
  return {ok, fmt("%zu/%zu metrics.json and checkpoint digests identical, backend calls %zu and %zu "
                  "with the warm cache",
                  equal, compared, calls[0], calls[1])};
}

// --- 8 ------------------------------------------------------------------

class LocalServer {
 public:
  explicit LocalServer(httplib::Server::Handler handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

Verdict cache_and_retries(const fs::path& root) {
  // Re-collecting a finished round is served from the cache.
  const ExperimentConfig cfg = load_config_file((kSource / "configs" / "smoke.toml").string());
  {
    Experiment exp = Experiment::create(root / "e", cfg);
    run_pipeline(exp);
  }
  Experiment exp = Experiment::open(root / "e");
  auto backend = make_backend(exp.config(), exp.bank());
  exp.set_backend(backend);
  // Exchanges minus the cached flag, which records how they were served.
  const auto content = [&] {
    Json all = Json::array();
    read_jsonl(exp.round_dir(2) / "teacher_exchanges.jsonl", [&](std::size_t, const Json& x) {
      all.push_back({x.at("request"), x.at("completions"), x.at("retained")});
    });
    return all;
  };
  const Json before = content();
  collect_stage(exp, 1);
  const auto again = collect_stage(exp, 2);
  const std::size_t recollect_calls = backend->calls();
  const bool unchanged = content() == before;
  const bool all_cached = std::all_of(again.begin(), again.end(), [](const auto& e) { return e.cached; });

  // An endpoint that always answers 429.
  std::mutex mu;
  std::size_t hits = 0;
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    std::lock_guard lock(mu);
    ++hits;
    res.status = 429;
    res.set_content("{\"error\":\"rate limited\"}", "application/json");
  });
  HttpBackendConfig http;
  http.base_url = server.url();
  http.timeout = std::chrono::milliseconds(5000);
  HttpChatBackend client(http);
  std::vector<long long> sleeps;
  TeacherRequest req;
  req.sample_id = "q";
  req.prompt = "Question: 1 + 1?\nReasoning:";
  bool raised = false;
  try {
    complete_with_retries(client, req, [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
  } catch (const TransportError&) {
    raised = true;
  }
  const bool schedule = sleeps == std::vector<long long>{1000, 2000, 4000};
  std::string listed;
  for (auto s : sleeps) listed += (listed.empty() ? "" : "/") + std::to_string(s / 1000);
  const bool ok = recollect_calls == 0 && unchanged && all_cached && !again.empty() && schedule && raised && hits == 4;
  return {ok, fmt("re-collect made %zu backend calls (%zu exchanges, %s, completions %s); 429 -> waits %s s over %zu "
                  "attempts, then %s",
                  recollect_calls, again.size(), all_cached ? "all cached" : "not all cached",
                  unchanged ? "unchanged" : "changed", listed.c_str(), hits,
                  raised ? "TransportError" : "no error")};
}

// --- 9 ------------------------------------------------------------------

Verdict report_reproduces(const ReferenceRun& run) {
  const auto rows = build_report(run.dir.path());
  if (rows.size() != run.history.size()) return {false, "row count differs from the history"};
  std::size_t exact = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    const auto& m = run.history[k];
    if (r.matches_recorded && r.error_rate == m.train_error_rate && r.accuracy == m.test_accuracy &&
        r.delta == m.accuracy_gain) {
      ++exact;
    }
  }
  // The CLI prints the same table.
  const std::string cmd = std::string(MENTOR_CLI_PATH) + " report --experiment-dir " +
                          run.dir.path().string() + " > " + (run.dir / "report.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  const bool cli_ok = WIFEXITED(status) && WEXITSTATUS(status) == 0 &&
                      read_file(run.dir / "report.txt") == render_report(rows);
  return {exact == rows.size() && cli_ok,
          fmt("%zu/%zu rounds reproduce ER, accuracy and delta bit for bit; CLI report %s", exact,
              rows.size(), cli_ok ? "matches" : "differs")};
}

}  // namespace

int main() {
  set_log_level(LogLevel::warn);
  report(1, "joint-loss gradient check", gradient_check);
  report(2, "loss identities", loss_identities);

  ReferenceRun ref;
  report(4, "reference run", [&] { return reference_run(ref); });
  TempDir scratch("acc_scratch");
  report(3, "rationale soundness and feedback ablation",
         [&] { return soundness(ref, scratch / "ablation"); });

  Sweep sweep;
  std::string sweep_error;
  try {
    Experiment exp = Experiment::open(ref.dir.path());
    const std::vector<double> lambdas{0.0, 0.5, 2.0};
    sweep.rows = sweep_lambda(exp, lambdas);
  } catch (const std::exception& e) {
    sweep_error = e.what();
  }
  auto guarded = [&](auto check) {
    return [&, check] {
      if (!sweep_error.empty()) return Verdict{false, "sweep failed: " + sweep_error};
      return check(sweep);
    };
  };
  report(5, "self-reflection direction", guarded(reflection_direction));
  report(6, "heavy lambda costs LM fit", guarded(heavy_lambda));

  report(7, "bitwise reproducibility", [&] { return determinism(scratch / "determinism"); });
  report(8, "teacher cache and retry schedule", [&] { return cache_and_retries(scratch / "cache"); });
  report(9, "report recomputation", [&] { return report_reproduces(ref); });

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "SOME FAILED", failures);
  return failures == 0 ? 0 : 1;
}
