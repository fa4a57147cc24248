// SPDX-License-Identifier: Apache-2.0
//
// Markdown and CSV tables derived purely from logged artifacts.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "precis/io.hpp"

namespace precis {

/// "FP16 (E5M10)".
std::string format_label(FpFormat fmt);

/// "(1, 2, 2.0)": median, 75th percentile, mean.
std::string format_attempts(const AttemptStats& stats);

struct Compression {
  double aggregate = 1.0;      // 160 / total_bits
  double mean_per_slot = 1.0;  // mean over slots of 32 / bits
};

Compression compression_ratios(const PrecisionConfig& config);

/// Exact per-environment measurements from a possibly early-stopped trial:
/// entry e is true when rates[e] is a measured value, not a bound.
std::vector<bool> measured_environments(const Trial& trial, const BaselineTargets& targets);

struct GridRow {
  std::string label;
  std::optional<PrecisionConfig> config;  // absent: nothing feasible logged
  std::array<bool, kSlotCount> slot_known{};
};

/// Combinatorial block: per environment, the logged trial with the fewest
/// total bits that met that environment's target (ties as in the search),
/// plus an "all environments" row with the jointly feasible best.
std::vector<GridRow> combinatorial_grid(const std::vector<Trial>& trials,
                                        const BaselineTargets& targets);

/// Per-tensor block: per environment and slot, the narrowest single-slot
/// config that met the target.
std::vector<GridRow> per_tensor_grid(const std::vector<Trial>& trials,
                                     const BaselineTargets& targets);

std::string grid_markdown(const std::string& title, const std::vector<GridRow>& rows);
std::string grid_csv(const std::vector<GridRow>& rows);

/// Elements per slot for one IK seed and for one TO seed.
struct TensorElements {
  std::array<std::int64_t, kSlotCount> per_ik_seed{};
  std::array<std::int64_t, kSlotCount> per_to_seed{};
};

TensorElements tensor_elements(const BaselineFile& geometry);

struct SizeRow {
  std::string stage;  // "IKO" or "TO"
  int seeds = 0;
  std::array<std::int64_t, kSlotCount> fp32_bytes{};
  std::array<std::int64_t, kSlotCount> reduced_bytes{};
};

/// Byte counts for 1x, 2x, 4x and 8x the configured seed counts.
std::vector<SizeRow> size_table(const BaselineFile& geometry, const PrecisionConfig& reduced);
std::string size_markdown(const std::vector<SizeRow>& rows);
std::string size_csv(const std::vector<SizeRow>& rows);

std::string attempts_markdown(const BaselineFile& baseline);
std::string sparsity_markdown(const BaselineFile& baseline);

struct ReportFiles {
  std::string markdown;
  std::string grid_csv;
  std::string size_csv;
};

/// Full report. `per_tensor` may be empty. Throws ConfigError when the
/// combinatorial log is empty or does not match the baseline environments.
ReportFiles build_report(const TrialLog& combinatorial, const std::vector<Trial>& per_tensor,
                         const BaselineFile& baseline, const std::optional<MinimaFile>& minima);

}  // namespace precis
