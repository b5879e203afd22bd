// SPDX-License-Identifier: Apache-2.0
#include "lexkit/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lexkit/io.hpp"
#include "lexkit/rng.hpp"

namespace lexkit {
namespace {

void check_ratios(const SplitSpec& spec) {
  if (spec.train < 0 || spec.val < 0 || spec.test < 0)
    throw std::invalid_argument("split ratios must be non-negative");
  const double sum = spec.train + spec.val + spec.test;
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split ratios must sum to 1");
}

std::string strip_bio(const std::string& tag) {
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') return tag.substr(2);
  return tag;
}

}  // namespace

SplitIndices split(std::int64_t n, const SplitSpec& spec) {
  check_ratios(spec);
  if (n < 10) throw std::invalid_argument("dataset too small to split: need at least 10 items");
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(idx);
  // Largest-remainder allocation keeps every bucket within one element of
  // ratio * n; floor/floor/remainder can put the whole rounding slack on the
  // test bucket.
  const double ratios[3] = {spec.train, spec.val, spec.test};
  std::int64_t sizes[3];
  double fracs[3];
  std::int64_t assigned = 0;
  for (int s = 0; s < 3; ++s) {
    const double exact = ratios[s] * static_cast<double>(n);
    sizes[s] = static_cast<std::int64_t>(exact);
    fracs[s] = exact - static_cast<double>(sizes[s]);
    assigned += sizes[s];
  }
  for (std::int64_t left = n - assigned; left > 0; --left) {
    int best = 0;
    for (int s = 1; s < 3; ++s)
      if (fracs[s] > fracs[best]) best = s;
    ++sizes[best];
    fracs[best] = -1.0;
  }
  SplitIndices out;
  out.train.assign(idx.begin(), idx.begin() + sizes[0]);
  out.val.assign(idx.begin() + sizes[0], idx.begin() + sizes[0] + sizes[1]);
  out.test.assign(idx.begin() + sizes[0] + sizes[1], idx.end());
  return out;
}

SplitIndices split_grouped(const std::vector<std::string>& group_of_item, const SplitSpec& spec) {
  check_ratios(spec);
  const auto n = static_cast<std::int64_t>(group_of_item.size());
  if (n < 10) throw std::invalid_argument("dataset too small to split: need at least 10 items");

  // Groups in first-appearance order, then shuffled, then dealt to whichever
  // split is furthest below its target size.
  std::map<std::string, std::vector<std::int64_t>> members;
  std::vector<std::string> order;
  for (std::int64_t i = 0; i < n; ++i) {
    auto [it, fresh] = members.try_emplace(group_of_item[static_cast<std::size_t>(i)]);
    if (fresh) order.push_back(it->first);
    it->second.push_back(i);
  }
  Rng rng(spec.seed);
  rng.shuffle(order);

  const double targets[3] = {spec.train * static_cast<double>(n),
                             spec.val * static_cast<double>(n),
                             spec.test * static_cast<double>(n)};
  double counts[3] = {0, 0, 0};
  SplitIndices out;
  std::vector<std::int64_t>* dest[3] = {&out.train, &out.val, &out.test};
  for (const auto& key : order) {
    int best = 0;
    double best_deficit = targets[0] - counts[0];
    for (int s = 1; s < 3; ++s) {
      const double deficit = targets[s] - counts[s];
      if (deficit > best_deficit) {
        best = s;
        best_deficit = deficit;
      }
    }
    const auto& items = members[key];
    dest[best]->insert(dest[best]->end(), items.begin(), items.end());
    counts[best] += static_cast<double>(items.size());
  }
  return out;
}

double binary_f1(const std::vector<int>& preds, const std::vector<int>& golds) {
  if (preds.size() != golds.size())
    throw std::invalid_argument("binary_f1: prediction/gold length mismatch");
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] != 0 && preds[i] != 1)
      throw std::invalid_argument("binary_f1: predictions must be 0 or 1");
    if (golds[i] != 0 && golds[i] != 1)
      throw std::invalid_argument("binary_f1: gold labels must be 0 or 1");
    if (preds[i] == 1 && golds[i] == 1) ++tp;
    else if (preds[i] == 1) ++fp;
    else if (golds[i] == 1) ++fn;
  }
  const double denom = static_cast<double>(2 * tp + fp + fn);
  if (denom == 0.0) return 0.0;
  return 2.0 * static_cast<double>(tp) / denom;
}

double token_micro_f1(const std::vector<std::vector<std::string>>& pred_tags,
                      const std::vector<std::vector<std::string>>& gold_tags) {
  if (pred_tags.size() != gold_tags.size())
    throw std::invalid_argument("token_micro_f1: sequence count mismatch");
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t s = 0; s < pred_tags.size(); ++s) {
    if (pred_tags[s].size() != gold_tags[s].size())
      throw std::invalid_argument("token_micro_f1: tag sequence length mismatch");
    for (std::size_t t = 0; t < pred_tags[s].size(); ++t) {
      const std::string& p = pred_tags[s][t];
      const std::string& g = gold_tags[s][t];
      if (p == g) {
        if (g != "O") ++tp;
        continue;
      }
      if (p != "O") ++fp;  // spurious prediction, even where gold is O
      if (g != "O") ++fn;
    }
  }
  const double denom = static_cast<double>(2 * tp + fp + fn);
  if (denom == 0.0) return 0.0;
  return 2.0 * static_cast<double>(tp) / denom;
}

EarlyStopResult early_stopping(const std::vector<double>& val_losses, std::int64_t patience) {
  if (val_losses.empty()) throw std::invalid_argument("early_stopping: no validation losses");
  if (patience < 0) throw std::invalid_argument("early_stopping: patience must be >= 0");
  const std::int64_t limit = std::max<std::int64_t>(patience, 1);
  EarlyStopResult res;
  double best = val_losses[0];
  res.best_epoch = 1;
  std::int64_t bad = 0;
  for (std::size_t e = 0; e < val_losses.size(); ++e) {
    res.stop_epoch = static_cast<std::int64_t>(e) + 1;
    if (e == 0) continue;
    if (val_losses[e] < best) {
      best = val_losses[e];
      res.best_epoch = res.stop_epoch;
      bad = 0;
    } else if (++bad >= limit) {
      break;
    }
  }
  return res;
}

Report aggregate(const std::vector<RunResult>& results) {
  if (results.empty()) throw std::invalid_argument("aggregate: no run results");
  struct Acc {
    std::vector<double> f1s;
    std::vector<std::uint64_t> seeds;
    double train_sum = 0, predict_sum = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> cells;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : results) {
    auto key = std::make_pair(r.task, r.model_tag);
    auto [it, fresh] = cells.try_emplace(key);
    if (fresh) order.push_back(key);
    for (const auto s : it->second.seeds)
      if (s == r.seed)
        throw std::invalid_argument("aggregate: duplicate seed " + std::to_string(r.seed) +
                                    " for task '" + r.task + "' model '" + r.model_tag + "'");
    it->second.seeds.push_back(r.seed);
    it->second.f1s.push_back(r.f1);
    it->second.train_sum += r.train_hours_per_epoch;
    it->second.predict_sum += r.predict_ms_per_sample;
  }
  Report report;
  for (const auto& key : order) {
    const Acc& a = cells[key];
    const auto n = static_cast<double>(a.f1s.size());
    ReportCell cell;
    cell.task = key.first;
    cell.model_tag = key.second;
    cell.num_seeds = static_cast<std::int64_t>(a.f1s.size());
    cell.single_seed = a.f1s.size() == 1;
    cell.mean_f1 = std::accumulate(a.f1s.begin(), a.f1s.end(), 0.0) / n;
    double ss = 0.0;
    for (const double v : a.f1s) ss += (v - cell.mean_f1) * (v - cell.mean_f1);
    cell.std_f1 = a.f1s.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    cell.mean_train_hours_per_epoch = a.train_sum / n;
    cell.mean_predict_ms_per_sample = a.predict_sum / n;
    report.cells.push_back(std::move(cell));
  }
  return report;
}

std::map<std::string, double> class_distribution(
    const std::vector<std::vector<std::string>>& tag_seqs) {
  std::map<std::string, std::int64_t> counts;
  std::int64_t total = 0;
  for (const auto& seq : tag_seqs) {
    for (const auto& tag : seq) {
      if (tag == "O") continue;
      ++counts[strip_bio(tag)];
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("class_distribution: no entity tokens");
  std::map<std::string, double> shares;
  for (const auto& [cls, c] : counts)
    shares[cls] = static_cast<double>(c) / static_cast<double>(total);
  return shares;
}

double predict_ms_per_sample(const std::function<void()>& single_forward,
                             std::int64_t num_samples, std::int64_t min_passes) {
  const std::int64_t passes = std::max<std::int64_t>(num_samples, min_passes);
  if (passes <= 0) throw std::invalid_argument("predict_ms_per_sample: nothing to time");
  const auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t i = 0; i < passes; ++i) single_forward();
  const auto t1 = std::chrono::steady_clock::now();
  const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return ms / static_cast<double>(passes);
}

void save_report_csv(const std::string& path, const Report& report,
                     const std::string& config_hash) {
  std::ostringstream out;
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << "\n";
  out << "task,model_tag,seeds,mean_f1,std_f1,train_hours_per_epoch,predict_ms_per_sample\n";
  char buf[160];
  for (const auto& c : report.cells) {
    std::snprintf(buf, sizeof buf, "%lld,%.6f,%.6f,%.6f,%.6f",
                  static_cast<long long>(c.num_seeds), c.mean_f1, c.std_f1,
                  c.mean_train_hours_per_epoch, c.mean_predict_ms_per_sample);
    out << c.task << ',' << c.model_tag << ',' << buf << '\n';
  }
  io::write_file(path, out.str());
}

namespace {

std::vector<std::string> unique_in_order(const std::vector<ReportCell>& cells,
                                         bool model_axis) {
  std::vector<std::string> out;
  for (const auto& c : cells) {
    const std::string& v = model_axis ? c.model_tag : c.task;
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  return out;
}

std::string pad_to(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::string render_f1_table(const Report& report) {
  const std::vector<std::string> models = unique_in_order(report.cells, true);
  const std::vector<std::string> tasks = unique_in_order(report.cells, false);
  std::map<std::pair<std::string, std::string>, std::string> cell_text;
  bool any_single = false;
  for (const auto& c : report.cells) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f (\xC2\xB1 %.3f)%s", c.mean_f1, c.std_f1,
                  c.single_seed ? "*" : "");
    cell_text[{c.model_tag, c.task}] = buf;
    any_single = any_single || c.single_seed;
  }

  std::vector<std::size_t> widths;
  std::size_t model_w = std::string("model").size();
  for (const auto& m : models) model_w = std::max(model_w, m.size());
  for (const auto& t : tasks) {
    std::size_t w = t.size();
    for (const auto& m : models) {
      auto it = cell_text.find({m, t});
      if (it != cell_text.end()) w = std::max(w, it->second.size() - 1);  // UTF-8 ± is 2 bytes
    }
    widths.push_back(w);
  }

  std::ostringstream out;
  out << pad_to("model", model_w);
  for (std::size_t j = 0; j < tasks.size(); ++j) out << "  " << pad_to(tasks[j], widths[j]);
  out << '\n';
  out << std::string(model_w, '-');
  for (std::size_t j = 0; j < tasks.size(); ++j) out << "  " << std::string(widths[j], '-');
  out << '\n';
  for (const auto& m : models) {
    out << pad_to(m, model_w);
    for (std::size_t j = 0; j < tasks.size(); ++j) {
      auto it = cell_text.find({m, tasks[j]});
      std::string text = it == cell_text.end() ? std::string("-") : it->second;
      // Pad by display width: the ± glyph takes two bytes but one column.
      const std::size_t display = text.find("\xC2\xB1") == std::string::npos
                                      ? text.size()
                                      : text.size() - 1;
      if (display < widths[j]) text.append(widths[j] - display, ' ');
      out << "  " << text;
    }
    out << '\n';
  }
  if (any_single) out << "* single seed; std is 0 by construction\n";
  return out.str();
}

std::string render_timing_table(const Report& report) {
  std::ostringstream out;
  std::size_t task_w = std::string("task").size(), model_w = std::string("model").size();
  for (const auto& c : report.cells) {
    task_w = std::max(task_w, c.task.size());
    model_w = std::max(model_w, c.model_tag.size());
  }
  const std::string train_h = "train_h/epoch", pred_h = "predict_ms/sample";
  out << pad_to("task", task_w) << "  " << pad_to("model", model_w) << "  " << train_h << "  "
      << pred_h << '\n';
  out << std::string(task_w, '-') << "  " << std::string(model_w, '-') << "  "
      << std::string(train_h.size(), '-') << "  " << std::string(pred_h.size(), '-') << '\n';
  char buf[64];
  for (const auto& c : report.cells) {
    out << pad_to(c.task, task_w) << "  " << pad_to(c.model_tag, model_w) << "  ";
    std::snprintf(buf, sizeof buf, "%13.4f", c.mean_train_hours_per_epoch);
    out << buf << "  ";
    std::snprintf(buf, sizeof buf, "%17.3f", c.mean_predict_ms_per_sample);
    out << buf << '\n';
  }
  return out.str();
}

}  // namespace lexkit
