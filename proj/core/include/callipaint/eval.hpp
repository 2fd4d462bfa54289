#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "callipaint/checkpoint.hpp"
#include "callipaint/classifier.hpp"
#include "callipaint/corpus.hpp"

namespace callipaint {

struct EvalRow {
  std::string script;
  long n = 0;
  double script_accuracy = 0.0;
  double character_accuracy = 0.0;

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // one per evaluated script, vocabulary order
  EvalRow total;              // sample-weighted over rows
  MaskSpec mask;
  double mean_mask_coverage = 0.0;
  int n_per_cell = 1;
  int jump_len = 0;
  int n_resample = 0;
  std::uint64_t seed = 0;
  std::string model_id;
  std::string classifier_id;
};

// Sample-weighted mean of the rows' accuracies.
EvalRow aggregate_rows(const std::vector<EvalRow>& rows);

std::string render_report_text(const EvalReport& report);
std::string report_to_json(const EvalReport& report);

struct EvalOptions {
  int jump_len = 10;
  int n_resample = 5;
};

using EvalProgress = std::function<void(std::size_t done, std::size_t total)>;

// Every val item is masked and inpainted `n_per_cell` times under its own
// label, and the result is classified.
EvalReport eval_inpainting(const Checkpoint& generator, const Classifier& classifier,
                           const std::vector<Example>& val, const MaskSpec& mask,
                           int n_per_cell, std::uint64_t seed,
                           const EvalOptions& options = {},
                           const EvalProgress& progress = {});

struct CompareResult {
  long n = 0;
  double acc_inpaint = 0.0;  // character accuracy
  double acc_generate = 0.0;
  double delta = 0.0;        // acc_inpaint - acc_generate
  double script_acc_inpaint = 0.0;
  double script_acc_generate = 0.0;
  double mean_mask_coverage = 0.0;
};

// Sample i uses val item i mod |val| for both arms.
CompareResult compare_inpaint_vs_generate(const Checkpoint& generator,
                                          const Classifier& classifier,
                                          const std::vector<Example>& val,
                                          const MaskSpec& mask, int n,
                                          std::uint64_t seed,
                                          const EvalOptions& options = {},
                                          const EvalProgress& progress = {});

std::string compare_to_json(const CompareResult& result);

// Mask spec whose single square rectangle covers about `fraction` of the image.
MaskSpec mask_spec_for_coverage(double fraction);

std::string classifier_id(const Classifier& clf);

}  // namespace callipaint
