#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "mentor/common/error.hpp"
#include "mentor/model/inference.hpp"
#include "mentor/model/kernels.hpp"
#include "mentor/model/transformer.hpp"

using namespace mentor;
using mentor::testing::micro_config;
using mentor::testing::random_sequence;
using mentor::testing::random_vector;

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Mean next-token cross-entropy plus <c, hidden>, computed from forward() alone.
double probe_loss(const ModelState& model, const TokenSequence& seq,
                  const std::vector<double>& c) {
  const ForwardOutput out = forward(model, seq);
  double ce = 0.0;
  for (int t = 1; t < out.length; ++t) {
    auto row = out.logits_row(t - 1);
    double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - m);
    ce += m + std::log(s) - row[static_cast<std::size_t>(seq.ids[static_cast<std::size_t>(t)])];
  }
  ce /= out.length - 1;
  double lin = 0.0;
  for (std::size_t i = 0; i < out.hidden_states.size(); ++i) lin += c[i] * out.hidden_states[i];
  return ce + lin;
}

std::vector<double> probe_grad(const ModelState& model, const TokenSequence& seq,
                               const std::vector<double>& c) {
  Engine<double> e(model);
  const auto tr = e.forward(seq.ids);
  const int L = tr.length, V = model.config.vocab_size;
  std::vector<double> dlogits(static_cast<std::size_t>(L) * V, 0.0);
  for (int t = 1; t < L; ++t) {
    const double* row = tr.logits.data() + static_cast<std::size_t>(t - 1) * V;
    double m = *std::max_element(row, row + V);
    double s = 0.0;
    for (int v = 0; v < V; ++v) s += std::exp(row[v] - m);
    for (int v = 0; v < V; ++v) {
      double p = std::exp(row[v] - m) / s;
      if (v == seq.ids[static_cast<std::size_t>(t)]) p -= 1.0;
      dlogits[static_cast<std::size_t>(t - 1) * V + v] = p / (L - 1);
    }
  }
  std::vector<double> g(model.layout.total(), 0.0);
  e.backward(tr, dlogits, c, g);
  return g;
}

}  // namespace

TEST_CASE("init_model is deterministic and validates dimensions") {
  const auto c = micro_config();
  const auto a = init_model(c);
  const auto b = init_model(c);
  CHECK(a.values == b.values);
  CHECK(a.step_count == 0);
  CHECK(a.values.size() == a.layout.total());

  ModelConfig ok = c;
  ok.hidden_dim = 32;
  ok.num_heads = 4;
  CHECK(ok.head_dim() == 8);
  CHECK_NOTHROW(init_model(ok));

  ModelConfig bad = c;
  bad.hidden_dim = 30;
  CHECK_THROWS_AS(init_model(bad), ConfigError);
  bad = c;
  bad.num_layers = 0;
  CHECK_THROWS_AS(init_model(bad), ConfigError);

  ModelConfig other = c;
  other.seed = 8;
  CHECK(init_model(other).values != a.values);
}

TEST_CASE("canonical parameter order and decay flags") {
  const auto m = init_model(micro_config());
  const auto& ts = m.layout.tensors();
  REQUIRE(!ts.empty());
  CHECK(ts.front().name == "wte");
  CHECK(ts.back().name == "head.b");
  std::size_t off = 0;
  for (const auto& t : ts) {
    CHECK(t.offset == off);
    const std::size_t n =
        std::accumulate(t.shape.begin(), t.shape.end(), std::size_t{1}, std::multiplies<>());
    CHECK(n == t.size);
    CHECK(t.decay == (t.shape.size() == 2 && t.name != "wte" && t.name != "wpe"));
    off += t.size;
  }
  CHECK(off == m.layout.total());
  CHECK_THROWS_AS(m.layout.find("nope"), LookupError);
}

TEST_CASE("reference and parallel kernels agree") {
  Rng rng(11);
  const int rows = 13, in = 24, out = 20, heads = 4;
  auto x = random_vector(rng, static_cast<std::size_t>(rows) * in);
  auto w = random_vector(rng, static_cast<std::size_t>(in) * out);
  auto b = random_vector(rng, static_cast<std::size_t>(out));
  auto dy = random_vector(rng, static_cast<std::size_t>(rows) * out);

  SUBCASE("matmul") {
    std::vector<double> y1(rows * out), y2(rows * out);
    kernels::reference::matmul_forward(y1.data(), x.data(), w.data(), b.data(), rows, in, out);
    kernels::parallel::matmul_forward(y2.data(), x.data(), w.data(), b.data(), rows, in, out);
    CHECK(max_abs_diff(y1, y2) < 1e-12);
    std::vector<double> dx1(rows * in), dw1(in * out), db1(out);
    auto dx2 = dx1, dw2 = dw1, db2 = db1;
    kernels::reference::matmul_backward(dx1.data(), dw1.data(), db1.data(), dy.data(), x.data(),
                                        w.data(), rows, in, out);
    kernels::parallel::matmul_backward(dx2.data(), dw2.data(), db2.data(), dy.data(), x.data(),
                                       w.data(), rows, in, out);
    CHECK(max_abs_diff(dx1, dx2) < 1e-12);
    CHECK(max_abs_diff(dw1, dw2) < 1e-12);
    CHECK(max_abs_diff(db1, db2) < 1e-12);
  }
  SUBCASE("attention") {
    const int dim = 16;
    auto qkv = random_vector(rng, static_cast<std::size_t>(rows) * 3 * dim);
    std::vector<double> y1(rows * dim), y2(rows * dim);
    std::vector<double> a1(heads * rows * rows), a2(heads * rows * rows);
    kernels::reference::attention_forward(y1.data(), a1.data(), qkv.data(), rows, dim, heads);
    kernels::parallel::attention_forward(y2.data(), a2.data(), qkv.data(), rows, dim, heads);
    CHECK(max_abs_diff(y1, y2) < 1e-12);
    CHECK(max_abs_diff(a1, a2) < 1e-12);
    auto dout = random_vector(rng, static_cast<std::size_t>(rows) * dim);
    std::vector<double> d1(rows * 3 * dim), d2(rows * 3 * dim);
    kernels::reference::attention_backward(d1.data(), dout.data(), qkv.data(), a1.data(), rows,
                                           dim, heads);
    kernels::parallel::attention_backward(d2.data(), dout.data(), qkv.data(), a1.data(), rows,
                                          dim, heads);
    CHECK(max_abs_diff(d1, d2) < 1e-12);
  }
  SUBCASE("layernorm and gelu") {
    std::vector<double> y1(rows * in), y2(rows * in), m1(rows), m2(rows), r1(rows), r2(rows);
    auto g = random_vector(rng, static_cast<std::size_t>(in));
    auto bb = random_vector(rng, static_cast<std::size_t>(in));
    kernels::reference::layernorm_forward(y1.data(), m1.data(), r1.data(), x.data(), g.data(),
                                          bb.data(), rows, in);
    kernels::parallel::layernorm_forward(y2.data(), m2.data(), r2.data(), x.data(), g.data(),
                                         bb.data(), rows, in);
    CHECK(max_abs_diff(y1, y2) == 0.0);
    std::vector<double> ge1(rows * in), ge2(rows * in);
    kernels::reference::gelu_forward(ge1.data(), x.data(), x.size());
    kernels::parallel::gelu_forward(ge2.data(), x.data(), x.size());
    CHECK(max_abs_diff(ge1, ge2) == 0.0);
  }
}

TEST_CASE("engine modes agree on forward and backward") {
  const auto m = init_model(micro_config());
  Rng rng(3);
  const auto seq = random_sequence(rng, 20, m.config.vocab_size);
  Engine<double> ref(m, kernels::KernelMode::reference);
  Engine<double> par(m, kernels::KernelMode::parallel);
  const auto t1 = ref.forward(seq.ids);
  const auto t2 = par.forward(seq.ids);
  CHECK(max_abs_diff(t1.logits, t2.logits) < 1e-10);
  CHECK(max_abs_diff(t1.hidden, t2.hidden) < 1e-10);
  auto dl = random_vector(rng, t1.logits.size(), 0.1);
  std::vector<double> g1(m.layout.total()), g2(m.layout.total());
  ref.backward(t1, dl, {}, g1);
  par.backward(t2, dl, {}, g2);
  CHECK(max_abs_diff(g1, g2) < 1e-10);
}

TEST_CASE("forward shapes, softmax rows and zeroed head") {
  auto m = init_model(micro_config());
  Rng rng(5);
  const auto seq = random_sequence(rng, 9, m.config.vocab_size);
  const auto out = forward(m, seq);
  CHECK(out.length == 9);
  CHECK(out.logits.size() == 9u * m.config.vocab_size);
  CHECK(out.hidden_states.size() == 9u * m.config.hidden_dim);
  for (int t = 0; t < out.length; ++t) {
    auto row = out.logits_row(t);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    double total = 0.0;
    for (double v : row) total += std::exp(v - mx) / s;
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
  for (auto& v : m.tensor("head.w")) v = 0.0;
  for (auto& v : m.tensor("head.b")) v = 0.0;
  const auto flat = forward(m, seq);
  for (double v : flat.logits) CHECK(v == 0.0);
}

TEST_CASE("forward rejects over-length input and unknown tokens") {
  const auto m = init_model(micro_config());
  TokenSequence s;
  for (int i = 0; i <= m.config.context_length; ++i) s.append(3, Segment::question);
  CHECK_THROWS_AS(forward(m, s), LengthError);
  TokenSequence bad;
  bad.append(m.config.vocab_size, Segment::question);
  CHECK_THROWS_AS(forward(m, bad), ContractError);
}

TEST_CASE("analytic gradients match central finite differences") {
  const auto m = init_model(micro_config(48));
  Rng rng(17);
  const auto seq = random_sequence(rng, 10, m.config.vocab_size);
  const auto c = random_vector(rng, 10u * m.config.hidden_dim, 0.05);
  const auto g = probe_grad(m, seq, c);

  // Every parameter of a few tensors plus a random sample of the rest.
  std::vector<std::size_t> idx;
  for (const auto& t : m.layout.tensors()) {
    const bool full = t.name == "head.b" || t.name == "lnf.g" || t.name == "h0.ln1.g";
    const std::size_t take = full ? t.size : std::min<std::size_t>(t.size, 24);
    for (std::size_t k = 0; k < take; ++k) {
      idx.push_back(t.offset + (full ? k : static_cast<std::size_t>(rng.below(t.size))));
    }
  }
  const double eps = 1e-5;
  double num2 = 0.0, den_a = 0.0, den_n = 0.0;
  double worst = 0.0;
  ModelState p = m;
  for (std::size_t i : idx) {
    const double orig = p.values[i];
    p.values[i] = orig + eps;
    const double up = probe_loss(p, seq, c);
    p.values[i] = orig - eps;
    const double dn = probe_loss(p, seq, c);
    p.values[i] = orig;
    const double fd = (up - dn) / (2 * eps);
    num2 += (fd - g[i]) * (fd - g[i]);
    den_a += g[i] * g[i];
    den_n += fd * fd;
    const double scale = std::max({std::abs(fd), std::abs(g[i]), 1e-3});
    worst = std::max(worst, std::abs(fd - g[i]) / scale);
  }
  const double rel = std::sqrt(num2) / std::max(std::sqrt(den_a), std::sqrt(den_n));
  INFO("relative error ", rel, ", worst coordinate ", worst);
  CHECK(rel < 1e-4);
  CHECK(worst < 1e-4);
}

TEST_CASE("KV-cache steps reproduce the full forward") {
  const auto m = init_model(micro_config());
  Rng rng(23);
  const auto seq = random_sequence(rng, 15, m.config.vocab_size);
  Engine<double> e(m);
  const auto tr = e.forward(seq.ids);
  auto cache = e.new_cache();
  std::vector<double> row(static_cast<std::size_t>(m.config.vocab_size));
  for (std::size_t t = 0; t < seq.size(); ++t) {
    e.step(cache, seq.ids[t], row);
    std::span<const double> full(tr.logits.data() + t * row.size(), row.size());
    CHECK(max_abs_diff(row, full) < 1e-10);
  }
  CHECK(cache.length == 15);
  CHECK_THROWS_AS(
      [&] {
        for (int i = 0; i < m.config.context_length; ++i) e.step(cache, 3, row);
      }(),
      LengthError);
}

TEST_CASE("float engine tracks the double engine") {
  const auto m = init_model(micro_config());
  Rng rng(29);
  const auto seq = random_sequence(rng, 12, m.config.vocab_size);
  const auto td = Engine<double>(m).forward(seq.ids);
  const auto tf = Engine<float>(m).forward(seq.ids);
  double worst = 0.0;
  for (std::size_t i = 0; i < td.logits.size(); ++i) {
    worst = std::max(worst, std::abs(td.logits[i] - static_cast<double>(tf.logits[i])));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("checkpoint round trip, truncation and mismatch") {
  auto m = init_model(micro_config());
  m.step_count = 77;
  const std::string bytes = save_checkpoint(m);
  const auto back = load_checkpoint(bytes, m.config);
  CHECK(back.values == m.values);
  CHECK(back.step_count == 77);
  CHECK(save_checkpoint(back) == bytes);
  CHECK(checkpoint_digest(back) == checkpoint_digest(m));

  CHECK_THROWS_AS(load_checkpoint(bytes.substr(0, bytes.size() - 5)), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(bytes.substr(0, 10)), CheckpointError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(load_checkpoint(bad_magic), CheckpointError);
  auto other = m.config;
  other.hidden_dim = 64;
  CHECK_THROWS_AS(load_checkpoint(bytes, other), CheckpointError);
}

TEST_CASE("generation contract") {
  const auto m = init_model(micro_config());
  Rng rng(31);
  auto prompt = random_sequence(rng, 5, m.config.vocab_size);
  for (auto& id : prompt.ids) id = std::max(id, 3);

  auto greedy = GenerationConfig::greedy(6);
  const auto g1 = generate(m, prompt, greedy, std::nullopt);
  REQUIRE(g1.size() == 1);
  CHECK(g1[0].size() == prompt.size() + 6);
  CHECK(std::equal(prompt.ids.begin(), prompt.ids.end(), g1[0].ids.begin()));
  greedy.temperature = 0.01;  // ignored in greedy mode
  CHECK(generate(m, prompt, greedy, std::nullopt)[0].ids == g1[0].ids);

  auto sample = GenerationConfig::mistakes();
  sample.max_new_tokens = 8;
  const auto s1 = generate(m, prompt, sample, std::nullopt);
  const auto s2 = generate(m, prompt, sample, std::nullopt);
  REQUIRE(s1.size() == 4);
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i].ids == s2[i].ids);
    CHECK(s1[i].size() <= prompt.size() + 8);
  }
  sample.seed = 43;
  const auto s3 = generate(m, prompt, sample, std::nullopt);
  bool differs = false;
  for (std::size_t i = 0; i < s1.size(); ++i) differs |= s1[i].ids != s3[i].ids;
  CHECK(differs);

  auto top1 = GenerationConfig::mistakes();
  top1.top_k = 1;
  top1.max_new_tokens = 6;
  for (const auto& s : generate(m, prompt, top1, std::nullopt)) CHECK(s.ids == g1[0].ids);

  // Stops right after the end-of-sequence token.
  const int first = g1[0].ids[prompt.size()];
  const auto stopped = generate(m, prompt, GenerationConfig::greedy(6), first);
  CHECK(stopped[0].size() == prompt.size() + 1);

  TokenSequence empty;
  CHECK_THROWS_AS(generate(m, empty, greedy), ContractError);
  TokenSequence longp;
  for (int i = 0; i < m.config.context_length + 1; ++i) longp.append(3, Segment::question);
  CHECK_THROWS_AS(generate(m, longp, greedy), LengthError);
}

TEST_CASE("select_token truncation") {
  Rng rng(1);
  const std::vector<double> logits = {0.0, 3.0, 2.9, -1.0};
  GenerationConfig g = GenerationConfig::mistakes();
  g.top_p = 1e-9;
  g.top_k.reset();
  for (int i = 0; i < 20; ++i) CHECK(select_token(logits, g, rng) == 1);
  g.top_p.reset();
  g.top_k = 2;
  for (int i = 0; i < 50; ++i) {
    const int t = select_token(logits, g, rng);
    CHECK((t == 1 || t == 2));
  }
  const std::vector<double> tie = {1.0, 2.0, 2.0};
  CHECK(select_token(tie, GenerationConfig::greedy(), rng) == 1);
  GenerationConfig bad = GenerationConfig::mistakes();
  bad.temperature = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = GenerationConfig::mistakes();
  bad.top_p = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("tokenizer round trip") {
  const std::vector<std::string> texts = {
      "Question: Tom has 12 apples. How many apples does Tom have now?\nReasoning: 12 + 3 = "
      "15.\nAnswer: 15"};
  const auto tok = Tokenizer::build(texts);
  CHECK(tok.id("Question:") == Tokenizer::kQuestion);
  CHECK(tok.id("Answer:") == Tokenizer::kAnswer);
  CHECK(tok.canonical(texts[0]) == texts[0]);
  const auto ids = tok.encode("12");
  CHECK(ids.size() == 2);
  CHECK(tok.encode("zebra") == std::vector<int>{Tokenizer::kUnk});
  const auto again = Tokenizer::from_vocab(tok.vocab());
  CHECK(again.encode(texts[0]) == tok.encode(texts[0]));
  CHECK_THROWS_AS(Tokenizer::from_vocab({"a", "b"}), ConfigError);
}

TEST_CASE("transformer student decodes text continuations") {
  const std::vector<std::string> texts = {"Question: a b c\nReasoning: d e\nAnswer: 1"};
  const auto tok = Tokenizer::build(texts);
  auto cfg = micro_config(tok.size());
  const auto m = init_model(cfg);
  TransformerStudent st(m, tok, Precision::f64);
  auto out = st.complete("Question: a b\nReasoning:", GenerationConfig::greedy(4));
  REQUIRE(out.size() == 1);
  auto wrong = micro_config(tok.size() + 1);
  CHECK_THROWS_AS(TransformerStudent(init_model(wrong), tok), ConfigError);
}
