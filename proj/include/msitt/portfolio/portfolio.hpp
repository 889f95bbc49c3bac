/*
 * Copyright 2026 The msitt Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "msitt/common/date.hpp"
#include "msitt/corpus/synthetic.hpp"
#include "msitt/evalkit/evalkit.hpp"

#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace msitt {

struct LiquidityScreen {
  double min_mktcap = 250e6;
  double min_adv = 1e6;

  bool passes(const UniverseRow& r) const { return r.mktcap >= min_mktcap && r.adv >= min_adv; }
};

/// Company-day table indexed by date.
class Universe {
 public:
  explicit Universe(std::span<const UniverseRow> rows);

  const std::vector<Date>& days() const { return days_; }
  const UniverseRow* find(Date d, const std::string& company) const;
  /// Companies with a row on `d` that pass the screen, sorted by id.
  std::vector<std::string> eligible(Date d, const LiquidityScreen& screen) const;
  /// Trading days in [begin, end].
  std::vector<Date> days_between(Date begin, Date end) const;

 private:
  std::vector<Date> days_;
  std::map<Date, std::map<std::string, UniverseRow>> by_day_;
};

/// Signed weights: long names positive, short names negative.
using Weights = std::map<std::string, double>;

/// Top quintile long, bottom quintile short, equal weight within a side.
/// Ranks by score, then by company id. Needs at least five names; throws
/// ContractError otherwise.
Weights rank_and_form(const std::map<std::string, double>& scores);

struct MonthReturn {
  double gross = 0.0;
  Weights drifted;  // end-of-month weights, each side rescaled to unit size
  std::vector<std::string> missing;  // held names without a return on some day
};

/// Compounds each position over `daily_returns` (one map per trading day).
/// A held name missing from a day keeps its last price that day.
MonthReturn step_month(const Weights& weights, std::span<const std::map<std::string, double>> daily_returns);

/// Sum of |new - drifted| over every name in either map.
double one_way_turnover(const Weights& next, const Weights& drifted);

struct PortfolioState {
  Date month;  // first calendar day of the holding month
  Weights weights;
  int scored = 0;  // eligible names with a score
  double gross = 0.0;
  double turnover = 0.0;
  double cost = 0.0;
  double net = 0.0;
  bool skipped = false;
  std::vector<std::string> missing;
};

/// Monthly cost = rate x that month's one-way turnover, so a year's costs
/// add up to rate x its one-way turnover.
void apply_costs(std::span<PortfolioState> states, double rate = 0.01);

struct PortfolioStats {
  double annual_return = 0.0;  // geometric
  double volatility = 0.0;     // monthly population stdev x sqrt(12)
  double sharpe = std::numeric_limits<double>::quiet_NaN();
  bool sharpe_defined = false;
  double annual_turnover = 0.0;
  int months = 0;
};

/// Needs at least 12 months; throws ContractError otherwise.
PortfolioStats portfolio_stats(std::span<const double> monthly_net, double risk_free = 0.0);

struct BacktestConfig {
  LiquidityScreen screen;
  double cost_rate = 0.01;
  double risk_free = 0.0;
  int horizon = 30;
};

struct Backtest {
  std::vector<PortfolioState> months;
  PortfolioStats stats;
};

/// At each month start, ranks the liquid names by their mean score over the
/// previous calendar month and holds the quintile portfolio to month end.
/// Months with fewer than five ranked names hold nothing.
Backtest run_backtest(std::span<const PredictionRecord> predictions, const Universe& universe,
                      const BacktestConfig& config = {});

/// Recomputes gross returns, turnover and costs from logged weights.
Backtest replay(std::span<const PortfolioState> logged, const Universe& universe, const BacktestConfig& config = {});

/// Weights are written as `name:weight` pairs joined by ';'.
void write_ledger_csv(const std::filesystem::path& path, std::span<const PortfolioState> months);
std::vector<PortfolioState> read_ledger_csv(const std::filesystem::path& path);

struct SummaryRow {
  std::string model;
  PortfolioStats stats;
};
/// Columns of an annualized statistics table: return, volatility, Sharpe.
std::string format_summary(std::span<const SummaryRow> rows);
void write_summary_csv(const std::filesystem::path& path, std::span<const SummaryRow> rows);

}  // namespace msitt
