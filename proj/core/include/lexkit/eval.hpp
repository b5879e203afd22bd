// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace lexkit {

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::int64_t> train, val, test;
};

/// Deterministic shuffled split of [0, n); sizes by largest-remainder
/// rounding, so each bucket is within one element of ratio * n (ties favor
/// train, then val). Throws below 10 items.
SplitIndices split(std::int64_t n, const SplitSpec& spec);

/// Group-aware variant: items sharing a group key land in the same split
/// (leakage control for (document, question) retrieval pairs).
SplitIndices split_grouped(const std::vector<std::string>& group_of_item, const SplitSpec& spec);

/// F1 of the positive class; 0 when precision + recall = 0.
double binary_f1(const std::vector<int>& preds, const std::vector<int>& golds);

/// Micro-averaged F1 over entity-class tokens. "O" is not a class (no TP
/// for matching O) but predicting a class on a gold-O token still counts as
/// a false positive. Throws on length mismatch.
double token_micro_f1(const std::vector<std::vector<std::string>>& pred_tags,
                      const std::vector<std::vector<std::string>>& gold_tags);

struct EarlyStopResult {
  std::int64_t stop_epoch = 0;  // 1-based count of epochs actually run
  std::int64_t best_epoch = 0;  // 1-based epoch with the lowest loss
};

/// Stops after `patience` consecutive epochs without strict improvement
/// (patience 0: stop at the first non-improvement).
EarlyStopResult early_stopping(const std::vector<double>& val_losses, std::int64_t patience = 3);

struct RunResult {
  std::string task;
  std::string model_tag;
  std::uint64_t seed = 0;
  double f1 = 0.0;
  double train_hours_per_epoch = 0.0;
  double predict_ms_per_sample = 0.0;
};

struct ReportCell {
  std::string task;
  std::string model_tag;
  std::int64_t num_seeds = 0;
  bool single_seed = false;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;  // sample (n-1) standard deviation
  double mean_train_hours_per_epoch = 0.0;
  double mean_predict_ms_per_sample = 0.0;
};

struct Report {
  std::vector<ReportCell> cells;
};

/// Groups by (task, model_tag); mean and sample std over seeds. Throws on
/// duplicate (task, model_tag, seed).
Report aggregate(const std::vector<RunResult>& results);

/// Per-class share of entity tokens over BIO tag sequences; shares sum
/// to 1. Throws when there is no entity token.
std::map<std::string, double> class_distribution(
    const std::vector<std::vector<std::string>>& tag_seqs);

/// Mean wall-clock milliseconds of one prediction: times `single_forward`
/// over max(min_passes, num_samples) invocations.
double predict_ms_per_sample(const std::function<void()>& single_forward,
                             std::int64_t num_samples, std::int64_t min_passes = 100);

/// CSV rows: task,model_tag,seeds,mean_f1,std_f1,train_hours_per_epoch,
/// predict_ms_per_sample (config hash embedded as a comment when given).
void save_report_csv(const std::string& path, const Report& report,
                     const std::string& config_hash = "");

/// Aligned text table: rows = model versions, columns = tasks,
/// cells "mean (± std)".
std::string render_f1_table(const Report& report);

/// Aligned text table of train/predict times per task.
std::string render_timing_table(const Report& report);

}  // namespace lexkit
