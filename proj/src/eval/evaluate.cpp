// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/eval/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "copsd/diffcore/rng.hpp"
#include "copsd/errors.hpp"
#include "copsd/model/sampler.hpp"
#include "copsd/policies/policies.hpp"

namespace copsd {

void EvalConfig::validate() const {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (budgets.empty()) throw ConfigError("budgets must be non-empty");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (budgets[i] < 1) throw ConfigError("budgets must be positive");
    if (i > 0 && budgets[i] <= budgets[i - 1]) throw ConfigError("budgets must be strictly ascending");
  }
  SamplingParams{temperature, top_p, budgets.back(), tok::kEos}.validate();
}

int eval_threads() {
  if (const char* env = std::getenv("COPSD_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::uint64_t sample_seed(std::uint64_t seed, std::int64_t problem_id, int sample_idx) {
  return derive_seed(seed, {static_cast<std::uint64_t>(problem_id), static_cast<std::uint64_t>(sample_idx)});
}

namespace {

template <typename F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&, w] {
      (void)w;
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

MetricsRecord score_generations(const Vocab& vocab, const std::vector<Generation>& generations, int dialect,
                                int budget, int k, const std::vector<EvalRecord>& problems) {
  std::map<std::int64_t, std::vector<bool>> outcomes;
  for (const auto& p : problems) outcomes[p.id];
  std::vector<std::vector<int>> samples;
  MetricsRecord r;
  r.dialect = vocab.dialect_name(dialect);
  r.budget = budget;
  r.k = k;
  double len = 0.0, lang = 0.0;
  for (const auto& g : generations) {
    if (g.budget != budget) continue;
    auto it = outcomes.find(g.problem_id);
    if (it == outcomes.end()) throw ProtocolError("generation for unknown problem " + std::to_string(g.problem_id));
    it->second.push_back(g.correct);
    samples.push_back(g.tokens);
    for (int n = 2; n <= 6; ++n) r.repeat[n - 2] += repeat_rate(g.tokens, n);
    lang += language_consistency(vocab, g.tokens, dialect);
    len += static_cast<double>(g.tokens.size());
  }
  std::vector<std::vector<bool>> per_problem;
  for (auto& [_, o] : outcomes) per_problem.push_back(std::move(o));
  r.pass_at_k_pct = pass_at_k_percent(per_problem, k);
  r.format_rate_pct = format_rate(samples);
  const double n = static_cast<double>(samples.size());
  for (double& v : r.repeat) v /= n;
  r.lang_consistency = lang / n;
  r.mean_gen_len = len / n;
  return r;
}

EvalResult evaluate(const Model& model, const Vocab& vocab, const std::vector<EvalRecord>& problems,
                    const std::string& dialect, const EvalConfig& config, const std::string& run_id,
                    const std::string& method, std::int64_t step) {
  config.validate();
  if (problems.empty()) throw ProtocolError("evaluation set is empty");
  const int d = vocab.dialect_index(dialect);
  const SamplingParams params{config.temperature, config.top_p, config.budgets.back(), tok::kEos};

  std::vector<std::vector<Rollout>> rollouts(problems.size());
  parallel_for(problems.size(), config.threads > 0 ? config.threads : eval_threads(), [&](std::size_t i) {
    const auto ctx = build_student_context(vocab, problems[i], dialect);
    std::vector<std::uint64_t> seeds;
    for (int s = 0; s < config.k; ++s) seeds.push_back(sample_seed(config.seed, problems[i].id, s));
    rollouts[i] = sample_group(model, ctx.tokens, params, seeds);
  });

  EvalResult out;
  for (int budget : config.budgets) {
    for (std::size_t i = 0; i < problems.size(); ++i) {
      for (int s = 0; s < config.k; ++s) {
        const auto& ro = rollouts[i][static_cast<std::size_t>(s)];
        Generation g;
        g.problem_id = problems[i].id;
        g.sample_idx = s;
        g.seed = ro.seed;
        g.budget = budget;
        const auto n = std::min(ro.tokens.size(), static_cast<std::size_t>(budget));
        g.tokens.assign(ro.tokens.begin(), ro.tokens.begin() + static_cast<std::ptrdiff_t>(n));
        g.boxed = extract_boxed(g.tokens);
        g.correct = g.boxed.has_value() && *g.boxed == problems[i].answer;
        out.generations.push_back(std::move(g));
      }
    }
  }
  for (int budget : config.budgets) {
    MetricsRecord r = score_generations(vocab, out.generations, d, budget, config.k, problems);
    r.run_id = run_id;
    r.method = method;
    r.step = step;
    out.records.push_back(std::move(r));
  }
  return out;
}

// ---- files -------------------------------------------------------------------

const char* const kMetricsHeader =
    "run_id,method,dialect,step,budget,k,pass_at_k_pct,format_rate_pct,repeat2,repeat3,repeat4,repeat5,repeat6,"
    "lang_consistency,mean_gen_len";

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void check_field(const std::string& s, const char* what) {
  if (s.find_first_of(",\n\"") != std::string::npos) {
    throw ParameterError(std::string(what) + " '" + s + "' may not contain commas, quotes or newlines");
  }
}

}  // namespace

std::string metrics_csv_row(const MetricsRecord& r) {
  check_field(r.run_id, "run_id");
  check_field(r.method, "method");
  check_field(r.dialect, "dialect");
  std::string s = r.run_id + "," + r.method + "," + r.dialect + "," + std::to_string(r.step) + "," +
                  std::to_string(r.budget) + "," + std::to_string(r.k) + "," + num(r.pass_at_k_pct) + "," +
                  num(r.format_rate_pct);
  for (double v : r.repeat) s += "," + num(v);
  s += "," + num(r.lang_consistency) + "," + num(r.mean_gen_len);
  return s;
}

void append_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot open '" + path.string() + "' for appending");
  if (fresh) out << kMetricsHeader << '\n';
  for (const auto& r : records) out << metrics_csv_row(r) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<MetricsRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == kMetricsHeader) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    const auto where = path.string() + ":" + std::to_string(n);
    if (f.size() != 15) throw CorpusError(where + ": expected 15 fields, got " + std::to_string(f.size()));
    try {
      MetricsRecord r;
      r.run_id = f[0];
      r.method = f[1];
      r.dialect = f[2];
      std::size_t pos = 0;
      auto whole = [&](const std::string& s, auto parse) {
        auto v = parse(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
      };
      auto dbl = [&](const std::string& s) {
        if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
        return whole(s, [](const std::string& x, std::size_t* p) { return std::stod(x, p); });
      };
      r.step = whole(f[3], [](const std::string& x, std::size_t* p) { return std::stoll(x, p); });
      r.budget = whole(f[4], [](const std::string& x, std::size_t* p) { return std::stoi(x, p); });
      r.k = whole(f[5], [](const std::string& x, std::size_t* p) { return std::stoi(x, p); });
      r.pass_at_k_pct = dbl(f[6]);
      r.format_rate_pct = dbl(f[7]);
      for (int i = 0; i < 5; ++i) r.repeat[i] = dbl(f[8 + i]);
      r.lang_consistency = dbl(f[13]);
      r.mean_gen_len = dbl(f[14]);
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw CorpusError(where + ": malformed numeric field");
    }
  }
  return out;
}

void write_generations_jsonl(const std::filesystem::path& path, const std::vector<Generation>& generations) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& g : generations) {
    nlohmann::json j = {{"problem_id", g.problem_id}, {"sample_idx", g.sample_idx}, {"seed", g.seed},
                        {"budget", g.budget},         {"tokens", g.tokens},         {"correct", g.correct}};
    j["boxed"] = g.boxed ? nlohmann::json(*g.boxed) : nlohmann::json(nullptr);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<Generation> read_generations_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<Generation> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Generation g;
      g.problem_id = j.at("problem_id").get<std::int64_t>();
      g.sample_idx = j.at("sample_idx").get<int>();
      g.seed = j.at("seed").get<std::uint64_t>();
      g.budget = j.at("budget").get<int>();
      g.tokens = j.at("tokens").get<std::vector<int>>();
      if (!j.at("boxed").is_null()) g.boxed = j.at("boxed").get<long>();
      g.correct = j.at("correct").get<bool>();
      out.push_back(std::move(g));
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

// ---- correlations ------------------------------------------------------------

CorrelationReport correlation_report(const std::vector<MetricsRecord>& records) {
  std::map<std::string, std::vector<const MetricsRecord*>> by_dialect;
  for (const auto& r : records) by_dialect[r.dialect].push_back(&r);
  CorrelationReport rep;
  std::vector<double> pool_x, pool_y;
  for (auto& [dialect, rs] : by_dialect) {
    std::stable_sort(rs.begin(), rs.end(), [](const auto* a, const auto* b) { return a->step < b->step; });
    std::vector<double> x, y;
    for (const auto* r : rs) {
      x.push_back(r->format_rate_pct);
      y.push_back(r->pass_at_k_pct);
    }
    if (x.size() < 2) {
      rep.warnings.push_back("dialect " + dialect + " skipped: fewer than two checkpoints");
      continue;
    }
    try {
      CorrelationReport::PerDialect pd{dialect, x.size(), correlation(x, y, CorrelationKind::kPearson),
                                       correlation(x, y, CorrelationKind::kSpearman)};
      rep.dialects.push_back(pd);
      pool_x.insert(pool_x.end(), x.begin(), x.end());
      pool_y.insert(pool_y.end(), y.begin(), y.end());
    } catch (const UndefinedCorrelationError&) {
      rep.warnings.push_back("dialect " + dialect + " skipped: zero variance");
    }
  }
  if (rep.dialects.empty()) throw UndefinedCorrelationError("no dialect trajectory supports a correlation");
  for (const auto& pd : rep.dialects) {
    rep.pearson_mean += pd.pearson;
    rep.spearman_mean += pd.spearman;
  }
  rep.pearson_mean /= static_cast<double>(rep.dialects.size());
  rep.spearman_mean /= static_cast<double>(rep.dialects.size());
  rep.pearson_pool = correlation(pool_x, pool_y, CorrelationKind::kPearson);
  rep.spearman_pool = correlation(pool_x, pool_y, CorrelationKind::kSpearman);
  return rep;
}

}  // namespace copsd
