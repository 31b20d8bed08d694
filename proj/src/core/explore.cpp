// SPDX-License-Identifier: Apache-2.0
#include "core/explore.hpp"

#include <algorithm>
#include <cmath>

#include "core/common.hpp"

namespace tinyquant::explore {

double promotability(const std::vector<double>& low_values,
                     const std::vector<double>& high_values, int cardinality) {
  if (low_values.size() != high_values.size())
    throw Error("value maps disagree on a tensor's entry count", "explore");
  std::vector<double> deviations;
  deviations.reserve(low_values.size());
  for (size_t i = 0; i < low_values.size(); ++i) {
    const double d = std::fabs(high_values[i] - low_values[i]);
    if (!std::isnan(d)) deviations.push_back(d);  // invalid samples carry NaN
  }
  if (deviations.empty()) throw Error("empty deviation list for a tensor", "explore");
  std::sort(deviations.begin(), deviations.end());
  const size_t rank = static_cast<size_t>(0.95 * static_cast<double>(deviations.size() - 1));
  return deviations[rank] / static_cast<double>(cardinality);
}

HeatMap create_heat_map(const exec::ValueMap& low_map, const exec::ValueMap& high_map,
                        const std::map<std::string, int>& cardinality) {
  HeatMap heat;
  for (const auto& [name, card] : cardinality) {
    const auto low = low_map.values.find(name);
    const auto high = high_map.values.find(name);
    if (low == low_map.values.end() || high == high_map.values.end())
      throw Error("value maps are missing tensor '" + name + "'", "explore");
    heat.score[name] = promotability(low->second, high->second, card);
  }
  // Descending by score; the sort is stable over definition order so equal
  // scores keep a deterministic ranking.
  for (const auto& [name, card] : cardinality) heat.order.push_back(name);
  std::stable_sort(heat.order.begin(), heat.order.end(), [&](const auto& a, const auto& b) {
    return heat.score.at(a) > heat.score.at(b);
  });
  return heat;
}

std::vector<std::string> promote_within_memory_limit(
    exec::Assignment& rho, const std::vector<std::string>& order, double memory_limit,
    double soft_limit, int low_bits, int high_bits,
    const std::function<long long(const exec::Assignment&)>& planned_usage) {
  const double threshold = memory_limit * soft_limit;
  std::vector<std::string> overshooting;
  double previous = static_cast<double>(planned_usage(rho));
  for (const auto& var : order) {
    rho[var] = high_bits;
    const double usage = static_cast<double>(planned_usage(rho));
    const bool reverted = usage > threshold;
    if (reverted) rho[var] = low_bits;
    // A reverted tensor always overshoots; a kept one overshoots only when
    // its promotion raised the planned usage exactly to the threshold.
    if (reverted || (usage >= threshold && usage > previous)) overshooting.push_back(var);
    if (!reverted) previous = usage;
  }
  return overshooting;
}

std::pair<int, int> choose_pair(std::vector<std::pair<int, double>> accuracy_by_bits,
                                double float_accuracy) {
  if (accuracy_by_bits.size() < 2)
    throw Error("bitwidth-pair selection needs at least two candidates", "explore");
  // Ascending accuracy; ties ordered by bitwidth so the lowest tied option
  // comes first.
  std::sort(accuracy_by_bits.begin(), accuracy_by_bits.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });
  size_t pick = accuracy_by_bits.size() - 2;  // default when float beats everything
  if (float_accuracy < accuracy_by_bits.front().second) {
    // Every homogeneous option beats float: fall back to the two smallest
    // bitwidths.
    std::vector<int> bits;
    for (const auto& [b, acc] : accuracy_by_bits) bits.push_back(b);
    std::sort(bits.begin(), bits.end());
    return {bits[0], bits[1]};
  }
  for (size_t i = 0; i + 1 < accuracy_by_bits.size(); ++i)
    if (accuracy_by_bits[i].second <= float_accuracy &&
        float_accuracy <= accuracy_by_bits[i + 1].second) {
      pick = i;
      break;
    }
  const int a = accuracy_by_bits[pick].first;
  const int b = accuracy_by_bits[pick + 1].first;
  return {std::min(a, b), std::max(a, b)};
}

// ---------------------------------------------------------------------------
// Session

Session::Session(const ir::Program& program, const exec::Weights& weights,
                 const exec::Dataset& dataset, numrep::Rep rep, Config config)
    : program_(program), instrs_(ir::linearize(program)), weights_(weights), dataset_(dataset),
      rep_(rep), config_(std::move(config)) {
  if (config_.low_bits >= config_.high_bits)
    throw Error("lowBitwidth must be smaller than highBitwidth", "explore");
  if (config_.soft_limit <= 0) throw Error("soft limit factor must be positive", "explore");
}

exec::Assignment Session::all_at(int bits) const {
  exec::Assignment rho;
  for (const auto& name : program_.tensor_order) rho[name] = bits;
  return rho;
}

long long Session::plan_usage(const exec::Assignment& rho) {
  ++stats_.codegen_calls;
  const auto ranges = memplan::live_ranges(instrs_, program_, rho);
  if (config_.exact_in_loop)
    return memplan::solve_exact(ranges, config_.coarsen, config_.timeout_secs).peak;
  return memplan::solve_first_fit(ranges).peak;
}

double Session::run_metric(const exec::Assignment& rho, long long* stat_category,
                           exec::ValueMap* log) {
  exec::RunSpec spec;
  spec.program = &program_;
  spec.instrs = &instrs_;
  spec.weights = &weights_;
  spec.dataset = &dataset_;
  spec.params = params_;
  spec.rho = &rho;
  spec.log_values = log != nullptr;
  const exec::RunResult result = exec::run(spec, log);
  ++stats_.execution_calls;
  ++*stat_category;
  return exec::metric_against(result, dataset_, float_ref_);
}

double Session::homogeneous_metric(int bits, long long* stat_category) {
  const exec::Assignment rho = all_at(bits);
  return run_metric(rho, stat_category);
}

void Session::ensure_reference() {
  if (reference_ready_) return;
  if (program_.input && dataset_.inputs.empty()) throw Error("dataset is empty", "explore");

  // Float reference: per-tensor ranges and the metric baseline.
  exec::RunSpec spec;
  spec.program = &program_;
  spec.instrs = &instrs_;
  spec.weights = &weights_;
  spec.dataset = &dataset_;
  spec.params = numrep::ParamSet::reference();
  spec.log_values = true;
  exec::ValueMap reference_values;
  float_ref_ = exec::run(spec, &reference_values);
  ++stats_.execution_calls;
  ++stats_.reference_runs;
  float_metric_ = dataset_.has_labels() ? exec::accuracy(float_ref_, dataset_.labels) : 0.0;

  params_.rep = rep_;
  params_.profile.clear();
  for (const auto& [name, values] : reference_values.values) {
    numrep::TensorProfile profile;
    profile.lo = values.empty() ? 0.0 : values[0];
    profile.hi = profile.lo;
    for (double v : values) {
      profile.lo = std::min(profile.lo, v);
      profile.hi = std::max(profile.hi, v);
    }
    profile.maxabs = std::max(std::fabs(profile.lo), std::fabs(profile.hi));
    params_.profile[name] = profile;
  }
  reference_ready_ = true;
}

void Session::set_bitwidth_pair(int low_bits, int high_bits) {
  if (low_bits >= high_bits)
    throw Error("lowBitwidth must be smaller than highBitwidth", "explore");
  config_.low_bits = low_bits;
  config_.high_bits = high_bits;
  preprocessed_ = false;  // es choices are per bitwidth
}

const numrep::ParamSet& Session::preprocess() {
  ensure_reference();
  if (rep_ == numrep::Rep::Posit) {
    auto choose_es = [&](int bits, const std::vector<int>& candidates) {
      if (candidates.empty()) throw Error("no es candidates", "explore");
      std::vector<int> sorted = candidates;
      std::sort(sorted.begin(), sorted.end());
      int best_es = sorted.front();
      if (sorted.size() > 1) {
        double best_metric = 0.0;
        bool first = true;
        for (int es : sorted) {
          params_.es_by_bits[bits] = es;
          const double m = homogeneous_metric(bits, &stats_.es_selection_runs);
          // Strict improvement only, so ties keep the smaller es.
          if (first || m > best_metric) {
            best_metric = m;
            best_es = es;
            first = false;
          }
        }
      }
      params_.es_by_bits[bits] = best_es;
    };
    choose_es(config_.low_bits, config_.es_low);
    choose_es(config_.high_bits, config_.es_high);
  }
  preprocessed_ = true;
  return params_;
}

void Session::save(const exec::Assignment& rho, double metric) {
  LedgerEntry entry;
  entry.rho = rho;
  entry.metric = metric;
  entry.planned_ram = plan_usage(rho);
  ledger_.push_back(std::move(entry));
}

void Session::save_entry(const exec::Assignment& rho, double metric) { save(rho, metric); }

std::pair<exec::ValueMap, exec::ValueMap> Session::create_value_maps() {
  if (!preprocessed_) preprocess();
  exec::ValueMap high_map, low_map;
  exec::Assignment rho = all_at(config_.high_bits);
  run_metric(rho, &stats_.exploration_runs, &high_map);
  rho = all_at(config_.low_bits);
  const double low_metric = run_metric(rho, &stats_.exploration_runs, &low_map);
  save(rho, low_metric);
  return {std::move(low_map), std::move(high_map)};
}

HeatMap Session::create_heat_map_from(const exec::ValueMap& low_map,
                                      const exec::ValueMap& high_map) {
  std::map<std::string, int> cardinality;
  for (const auto& name : program_.tensor_order)
    cardinality[name] = program_.shape_of(name).cardinality();
  heat_ = create_heat_map(low_map, high_map, cardinality);
  return heat_;
}

exec::Assignment Session::promotion_algorithm(const std::vector<std::string>& order) {
  const double threshold = config_.memory_limit * config_.soft_limit;
  auto plan = [&](const exec::Assignment& rho) { return plan_usage(rho); };
  auto walk = [&](exec::Assignment& rho) {
    return promote_within_memory_limit(rho, order, config_.memory_limit, config_.soft_limit,
                                       config_.low_bits, config_.high_bits, plan);
  };
  // The all-low entry from the value-map stage is already in the ledger, so
  // the walk stages may skip saving a configuration that ended up over the
  // threshold (possible when even all-low does not fit).
  auto run_and_save = [&](exec::Assignment& rho, long long usage_hint) {
    const double metric = run_metric(rho, &stats_.exploration_runs);
    if (static_cast<double>(usage_hint) > threshold) return;
    LedgerEntry entry;
    entry.rho = rho;
    entry.metric = metric;
    entry.planned_ram = usage_hint;
    ledger_.push_back(std::move(entry));
  };

  // Stage 1: cumulative promotion from all-low.
  exec::Assignment rho = all_at(config_.low_bits);
  overshooting_ = walk(rho);
  run_and_save(rho, plan(rho));

  // Stage 2: each overshooting tensor promoted first, then the walk.
  for (const auto& var : overshooting_) {
    rho = all_at(config_.low_bits);
    rho[var] = config_.high_bits;
    if (static_cast<double>(plan(rho)) > threshold) continue;
    walk(rho);
    run_and_save(rho, plan(rho));
  }

  // Stage 3: all overshooting tensors promoted together, then the walk.
  rho = all_at(config_.low_bits);
  for (const auto& var : overshooting_) rho[var] = config_.high_bits;
  walk(rho);
  run_and_save(rho, plan(rho));

  // Best metric; ties prefer fewer high-bitwidth bytes, then the earliest
  // saved configuration.
  if (ledger_.empty()) throw Error("exploration saved no configurations", "explore");
  auto high_bytes = [&](const exec::Assignment& assignment) {
    long long total = 0;
    for (const auto& [name, bits] : assignment)
      if (bits == config_.high_bits)
        total += memplan::tensor_size_bytes(bits, program_.shape_of(name).cardinality());
    return total;
  };
  size_t best = 0;
  for (size_t i = 1; i < ledger_.size(); ++i) {
    if (ledger_[i].metric > ledger_[best].metric) {
      best = i;
    } else if (ledger_[i].metric == ledger_[best].metric &&
               high_bytes(ledger_[i].rho) < high_bytes(ledger_[best].rho)) {
      best = i;
    }
  }
  return ledger_[best].rho;
}

exec::Assignment Session::explore() {
  preprocess();
  const auto [low_map, high_map] = create_value_maps();
  create_heat_map_from(low_map, high_map);
  return promotion_algorithm(heat_.order);
}

std::pair<int, int> Session::select_bitwidth_pair(const std::vector<int>& candidates) {
  if (!preprocessed_) preprocess();
  // Unlabeled datasets use the negated-error metric; the float reference
  // then scores 0, above every homogeneous option.
  std::vector<std::pair<int, double>> metric_by_bits;
  for (int bits : candidates) {
    const exec::Assignment rho = all_at(bits);
    metric_by_bits.emplace_back(bits, run_metric(rho, &stats_.pair_selection_runs));
  }
  return choose_pair(std::move(metric_by_bits), float_metric_);
}

}  // namespace tinyquant::explore
