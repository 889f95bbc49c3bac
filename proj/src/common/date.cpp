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

#include "msitt/common/date.hpp"

#include "msitt/common/error.hpp"

#include <charconv>
#include <cstdio>

namespace msitt {

namespace {

// Howard Hinnant's civil-from-days / days-from-civil.
int days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int>(doe) - 719468;
}

int parse_int(std::string_view s, std::string_view whole) {
  int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ParseError("bad date/time: " + std::string(whole));
  return v;
}

unsigned days_in_month(int y, unsigned m) {
  static constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  return m == 2 && leap ? 29u : kDays[m - 1];
}

}  // namespace

Date Date::from_ymd(int year, unsigned month, unsigned day) { return Date{days_from_civil(year, month, day)}; }

void Date::to_ymd(int& year, unsigned& month, unsigned& day) const {
  const int z = days + 719468;
  const int era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int y = static_cast<int>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  day = doy - (153 * mp + 2) / 5 + 1;
  month = mp < 10 ? mp + 3 : mp - 9;
  year = y + (month <= 2);
}

int Date::year() const {
  int y;
  unsigned m, d;
  to_ymd(y, m, d);
  return y;
}

unsigned Date::month() const {
  int y;
  unsigned m, d;
  to_ymd(y, m, d);
  return m;
}

int Date::weekday() const {
  // 1970-01-01 was a Thursday.
  return ((days % 7) + 7 + 3) % 7;
}

std::string Date::str() const {
  int y;
  unsigned m, d;
  to_ymd(y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", y, m, d);
  return buf;
}

std::string Timestamp::str() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d:%02d", minutes / 60, minutes % 60);
  return date.str() + "T" + buf;
}

Date parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw ParseError("bad date: " + std::string(s));
  const int y = parse_int(s.substr(0, 4), s);
  const int m = parse_int(s.substr(5, 2), s);
  const int d = parse_int(s.substr(8, 2), s);
  if (m < 1 || m > 12 || d < 1 || static_cast<unsigned>(d) > days_in_month(y, static_cast<unsigned>(m)))
    throw ParseError("bad date: " + std::string(s));
  return Date::from_ymd(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
}

Timestamp parse_timestamp(std::string_view s) {
  Timestamp ts;
  ts.date = parse_date(s.substr(0, std::min<std::size_t>(10, s.size())));
  if (s.size() == 10) return ts;
  if (s.size() < 16 || (s[10] != 'T' && s[10] != ' ') || s[13] != ':') throw ParseError("bad timestamp: " + std::string(s));
  const int hh = parse_int(s.substr(11, 2), s);
  const int mm = parse_int(s.substr(14, 2), s);
  if (hh > 23 || mm > 59) throw ParseError("bad timestamp: " + std::string(s));
  ts.minutes = hh * 60 + mm;
  return ts;
}

std::vector<Date> weekdays_before(Date t, int n) {
  std::vector<Date> out(static_cast<std::size_t>(n));
  Date d = t - 1;
  for (int i = n - 1; i >= 0; --i) {
    while (!d.is_weekday()) d = d - 1;
    out[static_cast<std::size_t>(i)] = d;
    d = d - 1;
  }
  return out;
}

Date next_weekday_on_or_after(Date d) {
  while (!d.is_weekday()) d = d + 1;
  return d;
}

}  // namespace msitt
