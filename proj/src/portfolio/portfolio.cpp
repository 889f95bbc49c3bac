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

#include "msitt/portfolio/portfolio.hpp"

#include "msitt/common/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace msitt {

Universe::Universe(std::span<const UniverseRow> rows) {
  for (const auto& r : rows) {
    if (!std::isfinite(r.close) || !std::isfinite(r.mktcap) || !std::isfinite(r.adv))
      throw DataError("universe: non-finite field for " + r.company + " on " + r.date.str());
    if (!by_day_[r.date].emplace(r.company, r).second)
      throw DataError("universe: duplicate row for " + r.company + " on " + r.date.str());
  }
  for (const auto& [d, _] : by_day_) days_.push_back(d);
}

const UniverseRow* Universe::find(Date d, const std::string& company) const {
  const auto day = by_day_.find(d);
  if (day == by_day_.end()) return nullptr;
  const auto it = day->second.find(company);
  return it == day->second.end() ? nullptr : &it->second;
}

std::vector<std::string> Universe::eligible(Date d, const LiquidityScreen& screen) const {
  std::vector<std::string> out;
  const auto day = by_day_.find(d);
  if (day == by_day_.end()) return out;
  for (const auto& [name, row] : day->second)
    if (screen.passes(row)) out.push_back(name);
  return out;
}

std::vector<Date> Universe::days_between(Date begin, Date end) const {
  const auto lo = std::lower_bound(days_.begin(), days_.end(), begin);
  const auto hi = std::upper_bound(days_.begin(), days_.end(), end);
  return {lo, hi};
}

Weights rank_and_form(const std::map<std::string, double>& scores) {
  if (scores.size() < 5) throw ContractError("rank_and_form: need at least 5 scored names");
  std::vector<std::pair<std::string, double>> ranked(scores.begin(), scores.end());
  for (const auto& [name, s] : ranked)
    if (!std::isfinite(s)) throw DataError("rank_and_form: non-finite score for " + name);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const std::size_t k = ranked.size() / 5;
  Weights w;
  const double each = 1.0 / static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i) {
    w[ranked[i].first] = each;
    w[ranked[ranked.size() - 1 - i].first] = -each;
  }
  return w;
}

MonthReturn step_month(const Weights& weights, std::span<const std::map<std::string, double>> daily_returns) {
  MonthReturn out;
  Weights value = weights;
  for (const auto& day : daily_returns) {
    for (auto& [name, v] : value) {
      const auto it = day.find(name);
      if (it == day.end()) {
        if (std::find(out.missing.begin(), out.missing.end(), name) == out.missing.end()) out.missing.push_back(name);
        continue;
      }
      v *= 1.0 + it->second;
    }
  }
  double long_size = 0.0, short_size = 0.0;
  for (const auto& [name, v] : value) {
    out.gross += v - weights.at(name);
    (weights.at(name) > 0.0 ? long_size : short_size) += std::abs(v);
  }
  for (const auto& [name, v] : value) {
    const double side = weights.at(name) > 0.0 ? long_size : short_size;
    out.drifted[name] = side > 0.0 ? v / side : 0.0;
  }
  return out;
}

double one_way_turnover(const Weights& next, const Weights& drifted) {
  double t = 0.0;
  for (const auto& [name, w] : next) {
    const auto it = drifted.find(name);
    t += std::abs(w - (it == drifted.end() ? 0.0 : it->second));
  }
  for (const auto& [name, w] : drifted)
    if (!next.count(name)) t += std::abs(w);
  return t;
}

void apply_costs(std::span<PortfolioState> states, double rate) {
  for (auto& s : states) {
    s.cost = rate * s.turnover;
    s.net = s.gross - s.cost;
  }
}

PortfolioStats portfolio_stats(std::span<const double> monthly_net, double risk_free) {
  if (monthly_net.size() < 12) throw ContractError("portfolio_stats: need at least 12 months");
  PortfolioStats st;
  st.months = static_cast<int>(monthly_net.size());
  const double n = static_cast<double>(monthly_net.size());
  double log_growth = 0.0, mean = 0.0;
  for (double r : monthly_net) {
    log_growth += std::log1p(r);
    mean += r;
  }
  mean /= n;
  st.annual_return = std::expm1(log_growth * 12.0 / n);
  double var = 0.0;
  const bool flat = std::all_of(monthly_net.begin(), monthly_net.end(), [&](double r) { return r == monthly_net[0]; });
  if (!flat)
    for (double r : monthly_net) var += (r - mean) * (r - mean);
  st.volatility = std::sqrt(var / n) * std::sqrt(12.0);
  if (st.volatility > 0.0) {
    st.sharpe = (st.annual_return - risk_free) / st.volatility;
    st.sharpe_defined = true;
  }
  return st;
}

namespace {

Date month_start(Date d) {
  int y;
  unsigned m, day;
  d.to_ymd(y, m, day);
  return Date::from_ymd(y, m, 1);
}

Date next_month(Date first) {
  int y;
  unsigned m, day;
  first.to_ymd(y, m, day);
  return m == 12 ? Date::from_ymd(y + 1, 1, 1) : Date::from_ymd(y, m + 1, 1);
}

/// Fills gross, turnover, costs and stats from each month's weights.
void simulate(std::vector<PortfolioState>& months, const Universe& universe, const BacktestConfig& config,
              PortfolioStats& stats) {
  Weights drifted;
  double turnover = 0.0;
  for (auto& s : months) {
    s.turnover = one_way_turnover(s.weights, drifted);
    turnover += s.turnover;
    std::vector<std::map<std::string, double>> daily;
    for (Date d : universe.days_between(s.month, next_month(s.month) - 1)) {
      std::map<std::string, double> r;
      for (const auto& [name, w] : s.weights)
        if (const UniverseRow* row = universe.find(d, name)) r.emplace(name, row->ret);
      daily.push_back(std::move(r));
    }
    const MonthReturn mr = step_month(s.weights, daily);
    s.gross = mr.gross;
    s.missing = mr.missing;
    if (!mr.missing.empty())
      spdlog::warn("backtest {}: {} held names marked to last price", s.month.str(), mr.missing.size());
    drifted = mr.drifted;
  }
  apply_costs(months, config.cost_rate);
  if (months.size() >= 12) {
    std::vector<double> net;
    for (const auto& s : months) net.push_back(s.net);
    stats = portfolio_stats(net, config.risk_free);
    stats.annual_turnover = turnover * 12.0 / static_cast<double>(months.size());
  } else {
    spdlog::warn("backtest: {} months, statistics need 12", months.size());
    stats = PortfolioStats{};
    stats.months = static_cast<int>(months.size());
  }
}

}  // namespace

Backtest run_backtest(std::span<const PredictionRecord> predictions, const Universe& universe,
                      const BacktestConfig& config) {
  std::map<Date, std::map<std::string, std::pair<double, int>>> by_month;  // month -> company -> (sum, count)
  for (const auto& p : predictions) {
    if (p.horizon != config.horizon) continue;
    if (!std::isfinite(p.score)) throw DataError("backtest: non-finite score for " + p.sample_id);
    auto& acc = by_month[month_start(p.date)][p.company];
    acc.first += p.score;
    acc.second += 1;
  }
  if (by_month.empty()) throw ContractError("backtest: no predictions at the configured horizon");
  Backtest bt;
  const Date last = by_month.rbegin()->first;
  for (Date m = next_month(by_month.begin()->first); m <= next_month(last); m = next_month(m)) {
    if (universe.days_between(m, next_month(m) - 1).empty()) continue;
    PortfolioState s;
    s.month = m;
    const auto before = std::lower_bound(universe.days().begin(), universe.days().end(), m);
    const auto scored = by_month.find(month_start(m - 1));
    if (before != universe.days().begin() && scored != by_month.end()) {
      std::map<std::string, double> scores;
      for (const auto& name : universe.eligible(*(before - 1), config.screen)) {
        const auto it = scored->second.find(name);
        if (it != scored->second.end()) scores[name] = it->second.first / it->second.second;
      }
      s.scored = static_cast<int>(scores.size());
      if (scores.size() >= 5) s.weights = rank_and_form(scores);
    }
    if (s.weights.empty()) {
      s.skipped = true;
      spdlog::info("backtest {}: {} ranked names, month skipped", m.str(), s.scored);
    }
    bt.months.push_back(std::move(s));
  }
  simulate(bt.months, universe, config, bt.stats);
  return bt;
}

Backtest replay(std::span<const PortfolioState> logged, const Universe& universe, const BacktestConfig& config) {
  Backtest bt;
  for (const auto& s : logged) {
    PortfolioState r;
    r.month = s.month;
    r.weights = s.weights;
    r.scored = s.scored;
    r.skipped = s.skipped;
    bt.months.push_back(std::move(r));
  }
  simulate(bt.months, universe, config, bt.stats);
  return bt;
}

namespace {

std::string precise(double x) {
  std::ostringstream s;
  s << std::setprecision(17) << x;
  return s.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

void write_ledger_csv(const std::filesystem::path& path, std::span<const PortfolioState> months) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "month,scored,skipped,gross,turnover,cost,net,missing,weights\n";
  for (const auto& s : months) {
    std::string w;
    for (const auto& [name, x] : s.weights) w += (w.empty() ? "" : ";") + name + ":" + precise(x);
    std::string miss;
    for (const auto& name : s.missing) miss += (miss.empty() ? "" : ";") + name;
    out << s.month.str() << ',' << s.scored << ',' << (s.skipped ? 1 : 0) << ',' << precise(s.gross) << ','
        << precise(s.turnover) << ',' << precise(s.cost) << ',' << precise(s.net) << ',' << miss << ',' << w << '\n';
  }
}

std::vector<PortfolioState> read_ledger_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<PortfolioState> out;
  std::size_t no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 9) throw ParseError(path.string() + ":" + std::to_string(no) + ": expected 9 fields");
    PortfolioState s;
    try {
      s.month = parse_date(f[0]);
      s.scored = std::stoi(f[1]);
      s.skipped = f[2] == "1";
      s.gross = std::stod(f[3]);
      s.turnover = std::stod(f[4]);
      s.cost = std::stod(f[5]);
      s.net = std::stod(f[6]);
      if (!f[7].empty()) s.missing = split(f[7], ';');
      if (!f[8].empty())
        for (const auto& pair : split(f[8], ';')) {
          const auto colon = pair.rfind(':');
          if (colon == std::string::npos) throw ParseError("bad weight " + pair);
          s.weights[pair.substr(0, colon)] = std::stod(pair.substr(colon + 1));
        }
    } catch (const std::invalid_argument&) {
      throw ParseError(path.string() + ":" + std::to_string(no) + ": bad number");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string format_summary(std::span<const SummaryRow> rows) {
  std::ostringstream s;
  s << std::left << std::setw(14) << "Model" << std::right << std::setw(16) << "Annual Return" << std::setw(14)
    << "Volatility" << std::setw(12) << "Sharpe" << '\n';
  s << std::fixed;
  for (const auto& r : rows) {
    s << std::left << std::setw(14) << r.model << std::right << std::setw(15) << std::setprecision(2)
      << 100.0 * r.stats.annual_return << '%' << std::setw(13) << 100.0 * r.stats.volatility << '%' << std::setw(12);
    if (r.stats.sharpe_defined)
      s << r.stats.sharpe;
    else
      s << "undefined";
    s << '\n';
  }
  return s.str();
}

void write_summary_csv(const std::filesystem::path& path, std::span<const SummaryRow> rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "model,annual_return,volatility,sharpe,annual_turnover,months\n";
  for (const auto& r : rows)
    out << r.model << ',' << precise(r.stats.annual_return) << ',' << precise(r.stats.volatility) << ','
        << (r.stats.sharpe_defined ? precise(r.stats.sharpe) : "") << ',' << precise(r.stats.annual_turnover) << ','
        << r.stats.months << '\n';
}

}  // namespace msitt
