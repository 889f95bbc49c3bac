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

#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace msitt {

/// Calendar date as days since 1970-01-01 (proleptic Gregorian).
struct Date {
  int days = 0;

  static Date from_ymd(int year, unsigned month, unsigned day);
  void to_ymd(int& year, unsigned& month, unsigned& day) const;
  int year() const;
  unsigned month() const;
  /// 0 = Monday ... 6 = Sunday.
  int weekday() const;
  bool is_weekday() const { return weekday() < 5; }
  std::string str() const;

  Date operator+(int n) const { return Date{days + n}; }
  Date operator-(int n) const { return Date{days - n}; }
  int operator-(Date o) const { return days - o.days; }
  auto operator<=>(const Date&) const = default;
};

struct Timestamp {
  Date date;
  int minutes = 0;  // minutes after midnight

  std::string str() const;
  auto operator<=>(const Timestamp&) const = default;
};

/// "YYYY-MM-DD"; throws ParseError.
Date parse_date(std::string_view s);
/// "YYYY-MM-DDTHH:MM" or "YYYY-MM-DD"; throws ParseError.
Timestamp parse_timestamp(std::string_view s);

/// The n weekdays strictly before t, ascending. Weekdays stand in for the
/// trading calendar.
std::vector<Date> weekdays_before(Date t, int n);
Date next_weekday_on_or_after(Date d);

}  // namespace msitt
