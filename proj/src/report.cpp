// SPDX-License-Identifier: Apache-2.0
#include "precis/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace precis {

std::string format_label(FpFormat fmt) {
  return "FP" + std::to_string(fmt.total_bits()) + " (" + fmt.name() + ")";
}

namespace {

// Shortest of %.2f with trailing zeros dropped, keeping one decimal.
std::string decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s(buf);
  while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  return s;
}

std::string integer(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.0f", v);
  return buf;
}

}  // namespace

std::string format_attempts(const AttemptStats& s) {
  return "(" + integer(s.median) + ", " + integer(s.p75) + ", " + decimal(s.mean) + ")";
}

Compression compression_ratios(const PrecisionConfig& config) {
  Compression c;
  c.aggregate = 160.0 / total_bits(config);
  double sum = 0.0;
  for (const FpFormat& f : config.formats) sum += 32.0 / f.total_bits();
  c.mean_per_slot = sum / kSlotCount;
  return c;
}

std::vector<bool> measured_environments(const Trial& trial, const BaselineTargets& targets) {
  std::vector<bool> out(trial.rates.size(), trial.complete);
  if (trial.complete) return out;
  // The evaluator stops at the first environment that cannot reach its target;
  // everything before it was measured in full.
  for (std::size_t e = 0; e < trial.rates.size(); ++e) {
    if (trial.rates[e] < targets.rates[e]) break;
    out[e] = true;
  }
  return out;
}

namespace {

bool meets(const Trial& t, const BaselineTargets& targets, std::size_t e) {
  return measured_environments(t, targets)[e] && t.rates[e] >= targets.rates[e];
}

GridRow row_for(const std::string& label, const std::optional<Trial>& best) {
  GridRow row;
  row.label = label;
  if (best) {
    row.config = best->config;
    row.slot_known.fill(true);
  }
  return row;
}

}  // namespace

std::vector<GridRow> combinatorial_grid(const std::vector<Trial>& trials,
                                        const BaselineTargets& targets) {
  std::vector<GridRow> rows;
  for (std::size_t e = 0; e < targets.environments.size(); ++e) {
    std::optional<Trial> best;
    for (const Trial& t : trials) {
      if (meets(t, targets, e) && (!best || better_feasible(t, *best))) best = t;
    }
    rows.push_back(row_for(targets.environments[e], best));
  }
  std::optional<Trial> joint;
  for (const Trial& t : trials) {
    if (t.feasible && (!joint || better_feasible(t, *joint))) joint = t;
  }
  rows.push_back(row_for("all environments", joint));
  return rows;
}

std::vector<GridRow> per_tensor_grid(const std::vector<Trial>& trials,
                                     const BaselineTargets& targets) {
  std::vector<GridRow> rows;
  for (std::size_t e = 0; e < targets.environments.size(); ++e) {
    GridRow row;
    row.label = targets.environments[e];
    PrecisionConfig config;
    for (Slot slot : kAllSlots) {
      const int i = static_cast<int>(slot);
      std::optional<Trial> best;
      for (const Trial& t : trials) {
        // Only configs that quantize this slot alone.
        bool single = true;
        for (Slot other : kAllSlots) {
          if (other != slot && !t.config[other].is_identity()) single = false;
        }
        if (!single || !meets(t, targets, e)) continue;
        if (!best || t.config[slot].total_bits() < best->config[slot].total_bits()) best = t;
      }
      if (best) {
        config[slot] = best->config[slot];
        row.slot_known[i] = true;
      }
    }
    row.config = config;
    rows.push_back(row);
  }
  return rows;
}

std::string grid_markdown(const std::string& title, const std::vector<GridRow>& rows) {
  std::ostringstream out;
  out << "### " << title << "\n\n| environment |";
  for (Slot s : kAllSlots) out << ' ' << slot_name(s) << " |";
  out << " total bits | 160/bits | mean 32/bits |\n|---|";
  for (int i = 0; i < kSlotCount + 3; ++i) out << "---|";
  out << '\n';
  for (const GridRow& r : rows) {
    out << "| " << r.label << " |";
    bool all_known = r.config.has_value();
    for (Slot s : kAllSlots) {
      const int i = static_cast<int>(s);
      if (r.config && r.slot_known[i]) {
        out << ' ' << format_label((*r.config)[s]) << " |";
      } else {
        out << " n/a |";
        all_known = false;
      }
    }
    if (all_known) {
      const Compression c = compression_ratios(*r.config);
      out << ' ' << total_bits(*r.config) << " | " << decimal(c.aggregate) << "x | "
          << decimal(c.mean_per_slot) << "x |";
    } else {
      out << " n/a | n/a | n/a |";
    }
    out << '\n';
  }
  out << '\n';
  return out.str();
}

std::string grid_csv(const std::vector<GridRow>& rows) {
  std::ostringstream out;
  out << "environment";
  for (Slot s : kAllSlots) out << ',' << slot_name(s);
  out << ",total_bits,compression_aggregate,compression_mean_per_slot\n";
  for (const GridRow& r : rows) {
    out << r.label;
    bool all_known = r.config.has_value();
    for (Slot s : kAllSlots) {
      const bool known = r.config && r.slot_known[static_cast<int>(s)];
      all_known = all_known && known;
      out << ',' << (known ? (*r.config)[s].name() : "");
    }
    if (all_known) {
      const Compression c = compression_ratios(*r.config);
      out << ',' << total_bits(*r.config) << ',' << decimal(c.aggregate) << ','
          << decimal(c.mean_per_slot);
    } else {
      out << ",,,";
    }
    out << '\n';
  }
  return out.str();
}

TensorElements tensor_elements(const BaselineFile& g) {
  TensorElements t;
  const std::int64_t spheres = g.sphere_count;
  const std::int64_t samples =
      g.horizon > 0 && g.to_substeps > 0 ? swept_sample_count(g.horizon, g.to_substeps) : 0;
  auto set = [](std::array<std::int64_t, kSlotCount>& a, Slot s, std::int64_t v) {
    a[static_cast<int>(s)] = v;
  };
  set(t.per_ik_seed, Slot::kOutSpheres, 3 * spheres);
  set(t.per_ik_seed, Slot::kGradOutSpheres, 2 * spheres);
  set(t.per_ik_seed, Slot::kOutVec, g.self_pairs);
  set(t.per_ik_seed, Slot::kClosestPt, 3 * spheres);
  set(t.per_to_seed, Slot::kOutSpheres, 3 * spheres * samples);
  set(t.per_to_seed, Slot::kGradOutSpheres, 2 * spheres * samples);
  set(t.per_to_seed, Slot::kOutVec, static_cast<std::int64_t>(g.self_pairs) * g.horizon);
  set(t.per_to_seed, Slot::kClosestPtSwept, 3 * spheres * samples);
  return t;
}

std::vector<SizeRow> size_table(const BaselineFile& g, const PrecisionConfig& reduced) {
  const TensorElements el = tensor_elements(g);
  std::vector<SizeRow> rows;
  auto add = [&](const std::string& stage, int seeds,
                 const std::array<std::int64_t, kSlotCount>& per_seed) {
    SizeRow r;
    r.stage = stage;
    r.seeds = seeds;
    for (Slot s : kAllSlots) {
      const int i = static_cast<int>(s);
      r.fp32_bytes[i] = data_movement_model(per_seed[i] * seeds, fp32()).bytes;
      r.reduced_bytes[i] = data_movement_model(per_seed[i] * seeds, reduced[s]).bytes;
    }
    rows.push_back(r);
  };
  for (int k : {1, 2, 4, 8}) add("IKO", g.ik_seeds * k, el.per_ik_seed);
  for (int k : {1, 2, 4, 8}) add("TO", g.to_seeds * k, el.per_to_seed);
  return rows;
}

std::string size_markdown(const std::vector<SizeRow>& rows) {
  std::ostringstream out;
  out << "### Tensor bytes vs seed count (FP32 -> reduced)\n\n| stage | seeds |";
  for (Slot s : kAllSlots) out << ' ' << slot_name(s) << " |";
  out << "\n|---|---|";
  for (int i = 0; i < kSlotCount; ++i) out << "---|";
  out << '\n';
  for (const SizeRow& r : rows) {
    out << "| " << r.stage << " | " << r.seeds << " |";
    for (int i = 0; i < kSlotCount; ++i) {
      if (r.fp32_bytes[i] == 0) {
        out << " - |";
      } else {
        out << ' ' << r.fp32_bytes[i] << " -> " << r.reduced_bytes[i] << " |";
      }
    }
    out << '\n';
  }
  out << '\n';
  return out.str();
}

std::string size_csv(const std::vector<SizeRow>& rows) {
  std::ostringstream out;
  out << "stage,seeds,slot,fp32_bytes,reduced_bytes\n";
  for (const SizeRow& r : rows) {
    for (Slot s : kAllSlots) {
      const int i = static_cast<int>(s);
      out << r.stage << ',' << r.seeds << ',' << slot_name(s) << ',' << r.fp32_bytes[i] << ','
          << r.reduced_bytes[i] << '\n';
    }
  }
  return out.str();
}

std::string attempts_markdown(const BaselineFile& b) {
  std::ostringstream out;
  out << "### Baseline success and attempts\n\n"
         "| environment | success rate | (median, 75%, mean) attempts |\n|---|---|---|\n";
  for (const EnvironmentBaseline& e : b.environments) {
    out << "| " << e.environment << " | " << e.successes << '/' << e.problems << " ("
        << decimal(e.rate) << ") | " << format_attempts(e.attempts) << " |\n";
  }
  out << '\n';
  return out.str();
}

std::string sparsity_markdown(const BaselineFile& b) {
  std::ostringstream out;
  out << "### Fraction of exact zeros per slot (baseline run)\n\n| environment |";
  for (Slot s : kAllSlots) out << ' ' << slot_name(s) << " |";
  out << "\n|---|";
  for (int i = 0; i < kSlotCount; ++i) out << "---|";
  out << '\n';
  for (const EnvironmentBaseline& e : b.environments) {
    out << "| " << e.environment << " |";
    for (double f : e.sparsity) out << ' ' << decimal(100.0 * f) << "% |";
    out << '\n';
  }
  out << '\n';
  return out.str();
}

ReportFiles build_report(const TrialLog& combinatorial, const std::vector<Trial>& per_tensor,
                         const BaselineFile& baseline, const std::optional<MinimaFile>& minima) {
  if (combinatorial.trials.empty()) throw ConfigError("trial log is empty");
  const BaselineTargets targets = targets_from(baseline.environments);
  if (combinatorial.environments != targets.environments) {
    throw ConfigError("trial log environments do not match the baseline file");
  }

  ReportFiles files;
  std::ostringstream md;
  md << "# Precision search report\n\n";
  md << attempts_markdown(baseline);

  std::vector<GridRow> rows;
  if (!per_tensor.empty()) {
    const std::vector<GridRow> pt = per_tensor_grid(per_tensor, targets);
    md << grid_markdown("Per-tensor binary search", pt);
    rows.insert(rows.end(), pt.begin(), pt.end());
    for (GridRow& r : rows) r.label = "per_tensor:" + r.label;
  }
  if (minima) {
    const SearchSpace space = reduce_space(slot_minima(*minima));
    char buf[160];
    std::snprintf(buf, sizeof buf, "Reduced space: %llu configurations, %.2fx smaller than %llu.\n\n",
                  static_cast<unsigned long long>(space.size()), space.reduction_factor(),
                  static_cast<unsigned long long>(full_space().size()));
    md << buf;
  }
  const std::vector<GridRow> comb = combinatorial_grid(combinatorial.trials, targets);
  md << grid_markdown("Combinatorial search", comb);
  for (GridRow r : comb) {
    r.label = "combinatorial:" + r.label;
    rows.push_back(r);
  }
  files.grid_csv = grid_csv(rows);

  const GridRow& joint = comb.back();
  if (joint.config) {
    md << "Packing factor per slot (values per 32-bit word):";
    for (Slot s : kAllSlots) {
      md << ' ' << slot_name(s) << '=' << (*joint.config)[s].packing_factor();
    }
    md << "\n\n";
  }
  const PrecisionConfig reduced = joint.config.value_or(PrecisionConfig{});
  const std::vector<SizeRow> sizes = size_table(baseline, reduced);
  md << size_markdown(sizes);
  files.size_csv = size_csv(sizes);
  md << sparsity_markdown(baseline);
  files.markdown = md.str();
  return files;
}

}  // namespace precis
