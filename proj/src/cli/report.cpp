// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/cli/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "copsd/errors.hpp"

namespace copsd {

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

}  // namespace

Report build_report(const std::vector<MetricsRecord>& records) {
  if (records.empty()) throw ProtocolError("no metrics records to report");
  Report rep;
  std::set<int> budgets;
  for (const auto& r : records) budgets.insert(r.budget);
  rep.budgets.assign(budgets.begin(), budgets.end());
  rep.selection_budget = rep.budgets.front();

  std::map<std::pair<std::string, std::string>, std::map<int, MetricsRecord>> base;
  std::set<std::string> trained_methods;
  for (const auto& r : records) {
    if (r.method == kBaseMethod) {
      base[{r.run_id, r.dialect}][r.budget] = r;
      rep.trajectories[{r.run_id, kBaseMethod, r.dialect}][0][r.budget] = r;
    } else {
      trained_methods.insert(r.method);
      rep.trajectories[{r.run_id, r.method, r.dialect}][r.step][r.budget] = r;
    }
  }
  for (auto& [key, traj] : rep.trajectories) {
    if (key.method == kBaseMethod) continue;
    auto b = base.find({key.run_id, key.dialect});
    if (b != base.end() && !traj.count(0)) traj[0] = b->second;
  }

  for (const auto& [key, traj] : rep.trajectories) {
    std::int64_t best_step = 0;
    double best = -1.0;
    bool trained = false;
    for (const auto& [step, by_budget] : traj) {
      if (step == 0) continue;
      auto it = by_budget.find(rep.selection_budget);
      if (it == by_budget.end()) continue;
      const double v = it->second.pass_at_k_pct;
      if (!trained || v > best) {
        best = v;
        best_step = step;
        trained = true;
      }
    }
    rep.selected[key] = trained ? best_step : 0;
  }

  // (method, dialect, budget) -> values over runs
  std::map<std::tuple<std::string, std::string, int>, std::array<std::vector<double>, 3>> cells;
  for (const auto& [key, step] : rep.selected) {
    for (const auto& [budget, r] : rep.trajectories.at(key).at(step)) {
      auto& c = cells[{key.method, key.dialect, budget}];
      c[0].push_back(r.pass_at_k_pct);
      c[1].push_back(r.format_rate_pct);
      c[2].push_back(r.repeat[2]);
    }
  }
  for (const auto& [k, v] : cells) {
    rep.table.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), mean_of(v[0]), mean_of(v[1]), mean_of(v[2]),
                         static_cast<int>(v[0].size()), false});
  }
  auto mark_best = [](std::vector<Report::Cell>& cells_) {
    std::map<std::pair<std::string, int>, double> top;
    for (const auto& c : cells_) {
      auto key = std::make_pair(c.dialect, c.budget);
      if (!top.count(key) || c.pass_at_k_pct > top[key]) top[key] = c.pass_at_k_pct;
    }
    for (auto& c : cells_) c.best = c.pass_at_k_pct == top[{c.dialect, c.budget}];
  };
  mark_best(rep.table);

  std::map<std::pair<std::string, int>, std::array<std::vector<double>, 3>> avg;
  for (const auto& c : rep.table) {
    // Averages span the low-resource dialects only, so every method's mean
    // covers the same set.
    if (c.dialect == "H") continue;
    auto& a = avg[{c.method, c.budget}];
    a[0].push_back(c.pass_at_k_pct);
    a[1].push_back(c.format_rate_pct);
    a[2].push_back(c.repeat4);
  }
  for (const auto& [k, v] : avg) {
    rep.averages.push_back(
        {k.first, "avg", k.second, mean_of(v[0]), mean_of(v[1]), mean_of(v[2]), static_cast<int>(v[0].size()), false});
  }
  mark_best(rep.averages);

  for (const auto& method : trained_methods) {
    std::vector<MetricsRecord> points;
    for (const auto& [key, traj] : rep.trajectories) {
      if (key.method != method) continue;
      for (const auto& [step, by_budget] : traj) {
        auto it = by_budget.find(rep.selection_budget);
        if (it == by_budget.end()) continue;
        MetricsRecord r = it->second;
        r.dialect = key.run_id + "/" + key.dialect;
        r.step = step;
        points.push_back(r);
      }
    }
    try {
      rep.correlations.push_back({method, correlation_report(points)});
    } catch (const UndefinedCorrelationError&) {
      Report::Correlation c{method, {}};
      c.report.pearson_mean = c.report.spearman_mean = c.report.pearson_pool = c.report.spearman_pool = std::nan("");
      c.report.warnings.push_back("method " + method + ": no trajectory supports a correlation");
      rep.correlations.push_back(std::move(c));
    }
  }
  return rep;
}

std::string report_csv(const Report& rep) {
  std::string s =
      "section,method,dialect,run_id,step,budget,pass_at_k_pct,format_rate_pct,repeat4,best,pearson,spearman,"
      "pearson_mean,spearman_mean,pearson_pool,spearman_pool,points\n";
  for (const auto& [key, step] : rep.selected) {
    for (const auto& [budget, r] : rep.trajectories.at(key).at(step)) {
      s += "selected," + key.method + "," + key.dialect + "," + key.run_id + "," + std::to_string(step) + "," +
           std::to_string(budget) + "," + num(r.pass_at_k_pct) + "," + num(r.format_rate_pct) + "," +
           num(r.repeat[2]) + ",,,,,,,,\n";
    }
  }
  auto cell_rows = [&](const char* section, const std::vector<Report::Cell>& cells) {
    for (const auto& c : cells) {
      s += std::string(section) + "," + c.method + "," + c.dialect + ",,," + std::to_string(c.budget) + "," +
           num(c.pass_at_k_pct) + "," + num(c.format_rate_pct) + "," + num(c.repeat4) + "," + (c.best ? "1" : "0") +
           ",,,,,,," + std::to_string(c.runs) + "\n";
    }
  };
  cell_rows("table", rep.table);
  cell_rows("average", rep.averages);
  for (const auto& c : rep.correlations) {
    for (const auto& d : c.report.dialects) {
      s += "correlation," + c.method + "," + d.dialect + ",,," + std::to_string(rep.selection_budget) + ",,,,," +
           num(d.pearson) + "," + num(d.spearman) + ",,,,," + std::to_string(d.points) + "\n";
    }
    s += "correlation," + c.method + ",all,,," + std::to_string(rep.selection_budget) + ",,,,,,," +
         num(c.report.pearson_mean) + "," + num(c.report.spearman_mean) + "," + num(c.report.pearson_pool) + "," +
         num(c.report.spearman_pool) + "," + std::to_string(c.report.dialects.size()) + "\n";
  }
  return s;
}

std::vector<MetricsRecord> collect_metrics(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    std::ifstream in(e.path());
    std::string header;
    std::getline(in, header);
    if (header == kMetricsHeader) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<MetricsRecord> out;
  for (const auto& f : files) {
    auto rs = read_metrics_csv(f);
    out.insert(out.end(), rs.begin(), rs.end());
  }
  return out;
}

// ---- SVG ---------------------------------------------------------------------

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Series {
  std::string label;
  std::string color;
  bool dashed = false;
  std::vector<std::pair<double, double>> points;  // NaN y values are skipped
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

std::string render_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                         const std::vector<Series>& series, bool categorical_x) {
  const double W = 640, H = 400, L = 60, R = 170, T = 40, B = 50;
  double xmin = 0, xmax = 1;
  bool any = false;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (std::isnan(y)) continue;
      if (!any) xmin = xmax = x;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      any = true;
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  const double ymin = 0, ymax = 100;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return T + (1.0 - (y - ymin) / (ymax - ymin)) * (H - T - B); };

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W) + "\" height=\"" + fmt(H) +
                  "\" viewBox=\"0 0 " + fmt(W) + " " + fmt(H) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt(W / 2 - R / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
       "</text>\n";
  s += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(H - B) + "\" x2=\"" + fmt(W - R) + "\" y2=\"" + fmt(H - B) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(T) + "\" x2=\"" + fmt(L) + "\" y2=\"" + fmt(H - B) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = ymin + (ymax - ymin) * i / 5.0;
    s += "<line x1=\"" + fmt(L - 4) + "\" y1=\"" + fmt(py(y)) + "\" x2=\"" + fmt(W - R) + "\" y2=\"" + fmt(py(y)) +
         "\" stroke=\"#ddd\"/>\n";
    s += "<text x=\"" + fmt(L - 8) + "\" y=\"" + fmt(py(y) + 4) + "\" text-anchor=\"end\">" + fmt(y).substr(0, fmt(y).size() - 3) +
         "</text>\n";
  }
  std::set<double> xticks;
  for (const auto& se : series) {
    for (const auto& [x, y] : se.points) xticks.insert(x);
  }
  if (!categorical_x || xticks.size() > 12) {
    xticks.clear();
    for (int i = 0; i <= 5; ++i) xticks.insert(xmin + (xmax - xmin) * i / 5.0);
  }
  for (double x : xticks) {
    s += "<line x1=\"" + fmt(px(x)) + "\" y1=\"" + fmt(H - B) + "\" x2=\"" + fmt(px(x)) + "\" y2=\"" + fmt(H - B + 4) +
         "\" stroke=\"black\"/>\n";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", std::round(x * 100) / 100);
    s += "<text x=\"" + fmt(px(x)) + "\" y=\"" + fmt(H - B + 16) + "\" text-anchor=\"middle\">" + buf + "</text>\n";
  }
  s += "<text x=\"" + fmt((L + W - R) / 2) + "\" y=\"" + fmt(H - 12) + "\" text-anchor=\"middle\">" + escape(xlabel) +
       "</text>\n";
  s += "<text x=\"16\" y=\"" + fmt((T + H - B) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       fmt((T + H - B) / 2) + ")\">" + escape(ylabel) + "</text>\n";

  int legend = 0;
  for (const auto& se : series) {
    std::string pts;
    for (const auto& [x, y] : se.points) {
      if (std::isnan(y)) continue;
      pts += (pts.empty() ? "" : " ") + fmt(px(x)) + "," + fmt(py(std::clamp(y, ymin, ymax)));
    }
    if (pts.empty()) continue;
    s += "<polyline fill=\"none\" stroke=\"" + se.color + "\" stroke-width=\"2\"" +
         (se.dashed ? std::string(" stroke-dasharray=\"6,4\"") : std::string()) + " points=\"" + pts + "\"/>\n";
    const double ly = T + 10 + 18 * legend++;
    s += "<line x1=\"" + fmt(W - R + 12) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(W - R + 40) + "\" y2=\"" + fmt(ly) +
         "\" stroke=\"" + se.color + "\" stroke-width=\"2\"" +
         (se.dashed ? std::string(" stroke-dasharray=\"6,4\"") : std::string()) + "/>\n";
    s += "<text x=\"" + fmt(W - R + 46) + "\" y=\"" + fmt(ly + 4) + "\">" + escape(se.label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

bool all_nan(const Series& s) {
  return std::all_of(s.points.begin(), s.points.end(), [](const auto& p) { return std::isnan(p.second); });
}

}  // namespace

PlotSet render_plots(const std::vector<MetricsRecord>& records) {
  PlotSet out;
  const Report rep = build_report(records);
  std::set<std::string> methods, dialects;
  for (const auto& [key, _] : rep.trajectories) {
    methods.insert(key.method);
    dialects.insert(key.dialect);
  }
  std::map<std::string, std::string> color;
  std::size_t ci = 0;
  for (const auto& m : methods) color[m] = kPalette[ci++ % std::size(kPalette)];

  for (const auto& dialect : dialects) {
    std::vector<Series> series;
    for (const auto& method : methods) {
      if (method == kBaseMethod) continue;
      // step -> values over runs
      std::map<std::int64_t, std::pair<std::vector<double>, std::vector<double>>> by_step;
      for (const auto& [key, traj] : rep.trajectories) {
        if (key.method != method || key.dialect != dialect) continue;
        for (const auto& [step, by_budget] : traj) {
          auto it = by_budget.find(rep.selection_budget);
          if (it == by_budget.end()) continue;
          by_step[step].first.push_back(it->second.pass_at_k_pct);
          by_step[step].second.push_back(it->second.format_rate_pct);
        }
      }
      if (by_step.empty()) continue;
      Series pass{method + " pass@k", color[method], false, {}};
      Series form{method + " format", color[method], true, {}};
      for (const auto& [step, v] : by_step) {
        pass.points.emplace_back(static_cast<double>(step), mean_of(v.first));
        form.points.emplace_back(static_cast<double>(step), mean_of(v.second));
      }
      for (auto* s : {&pass, &form}) {
        if (all_nan(*s)) {
          out.warnings.push_back("dialect " + dialect + ": series '" + s->label + "' has no values; omitted");
        } else {
          series.push_back(*s);
        }
      }
    }
    if (series.empty()) continue;
    out.files.emplace_back("training_" + dialect + ".svg",
                           render_chart("Training dynamics, " + dialect + " (budget " +
                                            std::to_string(rep.selection_budget) + ")",
                                        "training step", "percent", series, true));
  }

  std::vector<Series> scaling;
  for (const auto& method : methods) {
    Series s{method, color[method], false, {}};
    for (int budget : rep.budgets) {
      std::vector<double> v;
      for (const auto& c : rep.table) {
        if (c.method == method && c.budget == budget) v.push_back(c.pass_at_k_pct);
      }
      s.points.emplace_back(static_cast<double>(budget), mean_of(v));
    }
    if (all_nan(s)) {
      out.warnings.push_back("scaling: series '" + method + "' has no values; omitted");
    } else {
      scaling.push_back(s);
    }
  }
  if (!scaling.empty()) {
    out.files.emplace_back("scaling.svg", render_chart("Test-time scaling (selected checkpoints)", "budget (tokens)",
                                                       "pass@k (%)", scaling, true));
  }
  return out;
}

}  // namespace copsd
