#include "dlstm/timeutil.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

#include "dlstm/errors.hpp"

namespace dlstm {
namespace {

int read_field(std::string_view text, std::size_t pos, std::size_t width) {
  int value = 0;
  const char* first = text.data() + pos;
  const char* last = first + width;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("bad timestamp '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

Timestamp parse_iso8601(std::string_view text) {
  if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);
  if (text.size() != 19 || text[4] != '-' || text[7] != '-' ||
      (text[10] != 'T' && text[10] != ' ') || text[13] != ':' ||
      text[16] != ':') {
    throw ParseError("bad timestamp '" + std::string(text) + "'");
  }
  using namespace std::chrono;
  const year_month_day ymd{year{read_field(text, 0, 4)},
                           month{static_cast<unsigned>(read_field(text, 5, 2))},
                           day{static_cast<unsigned>(read_field(text, 8, 2))}};
  const int hh = read_field(text, 11, 2);
  const int mm = read_field(text, 14, 2);
  const int ss = read_field(text, 17, 2);
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 59) {
    throw ParseError("timestamp out of range '" + std::string(text) + "'");
  }
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<Timestamp>(days) * 86400 + hh * 3600 + mm * 60 + ss;
}

std::string format_iso8601(Timestamp t) {
  using namespace std::chrono;
  Timestamp days = t / 86400;
  Timestamp rem = t % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                static_cast<int>(rem % 3600 / 60), static_cast<int>(rem % 60));
  return buf;
}

}  // namespace dlstm
