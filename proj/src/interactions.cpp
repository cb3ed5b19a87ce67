#include "seqcheck/interactions.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "seqcheck/common.hpp"

namespace seqcheck {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

bool parse_int(const std::string& s, int& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

// Resolves a column reference (header name or decimal index) to an index.
int resolve_column(const std::string& ref, const std::vector<std::string>& header,
                   bool has_header, const char* what) {
  if (!header.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == ref) return static_cast<int>(i);
  }
  int idx = -1;
  if (parse_int(ref, idx) && idx >= 0) return idx;
  if (has_header)
    throw ConfigError(std::string("column '") + ref + "' for " + what +
                      " not found in header");
  throw ConfigError(std::string("column reference '") + ref + "' for " + what +
                    " is not a valid index");
}

int intern(const std::string& id, std::unordered_map<std::string, int>& index,
           std::vector<std::string>& ids) {
  auto [it, inserted] = index.try_emplace(id, static_cast<int>(ids.size()));
  if (inserted) ids.push_back(id);
  return it->second;
}

// Rebuilds a log from a subset of rows, re-densifying both vocabularies in
// order of first appearance.
InteractionLog rebuild(const InteractionLog& log, const std::vector<char>& keep_row) {
  InteractionLog out;
  const bool has_events = !log.event_types.empty();
  for (std::size_t r = 0; r < log.interactions.size(); ++r) {
    if (!keep_row[r]) continue;
    const Interaction& in = log.interactions[r];
    Interaction copy;
    copy.user = intern(log.user_ids[in.user], out.user_index, out.user_ids);
    copy.item = intern(log.item_ids[in.item], out.item_index, out.item_ids);
    copy.timestamp = in.timestamp;
    out.interactions.push_back(copy);
    if (has_events) out.event_types.push_back(log.event_types[r]);
  }
  return out;
}

}  // namespace

InteractionLog parse_interactions(std::istream& source, const ParseSchema& schema,
                                  ParseReport* report) {
  InteractionLog log;
  std::string line;
  std::size_t line_no = 0;

  std::vector<std::string> header;
  if (schema.has_header) {
    if (std::getline(source, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      header = split_line(line, schema.delimiter);
    }
  }
  const int user_col = resolve_column(schema.user_col, header, schema.has_header, "user");
  const int item_col = resolve_column(schema.item_col, header, schema.has_header, "item");
  const int time_col = resolve_column(schema.time_col, header, schema.has_header, "timestamp");
  const bool has_event = !schema.event_col.empty();
  const int event_col =
      has_event ? resolve_column(schema.event_col, header, schema.has_header, "event_type")
                : -1;
  const int max_col = std::max({user_col, item_col, time_col, event_col});

  auto fail = [&](const std::string& why) -> bool {
    if (schema.fail_fast)
      throw ParseError("line " + std::to_string(line_no) + ": " + why);
    if (report) {
      ++report->rows_skipped;
      if (report->warnings.size() < 20)
        report->warnings.push_back("line " + std::to_string(line_no) + ": " + why);
    }
    return false;
  };

  while (std::getline(source, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line, schema.delimiter);
    if (static_cast<int>(fields.size()) <= max_col) {
      fail("expected at least " + std::to_string(max_col + 1) + " columns, got " +
           std::to_string(fields.size()));
      continue;
    }
    const std::string& user = fields[user_col];
    const std::string& item = fields[item_col];
    if (user.empty() || item.empty()) {
      fail("empty user or item id");
      continue;
    }
    double ts = 0.0;
    try {
      std::size_t consumed = 0;
      ts = std::stod(fields[time_col], &consumed);
      if (consumed != fields[time_col].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      fail("non-numeric timestamp '" + fields[time_col] + "'");
      continue;
    }
    if (!std::isfinite(ts)) {
      fail("non-finite timestamp");
      continue;
    }
    Interaction rec;
    rec.user = intern(user, log.user_index, log.user_ids);
    rec.item = intern(item, log.item_index, log.item_ids);
    rec.timestamp = ts;
    log.interactions.push_back(rec);
    if (has_event) log.event_types.push_back(fields[event_col]);
  }
  return log;
}

InteractionLog parse_interactions_file(const std::string& path, const ParseSchema& schema,
                                       ParseReport* report) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open input file: " + path);
  return parse_interactions(in, schema, report);
}

InteractionLog filter_event_type(const InteractionLog& log, const std::string& keep,
                                 ParseReport* report) {
  if (keep.empty()) return log;
  if (log.event_types.empty()) {
    if (report)
      report->warnings.push_back("event filter '" + keep +
                                 "' requested but the log has no event column");
    return log;
  }
  std::vector<char> keep_row(log.interactions.size(), 0);
  std::size_t kept = 0;
  for (std::size_t r = 0; r < log.interactions.size(); ++r) {
    if (log.event_types[r] == keep) {
      keep_row[r] = 1;
      ++kept;
    }
  }
  if (kept == 0 && report)
    report->warnings.push_back("event type '" + keep + "' absent from log; result is empty");
  InteractionLog out = rebuild(log, keep_row);
  out.event_types.clear();  // single event type left, column carries no information
  return out;
}

InteractionLog k_core_filter(const InteractionLog& log, int k) {
  if (k < 1) throw ConfigError("k_core_filter requires k >= 1");
  std::vector<char> keep_row(log.interactions.size(), 1);
  std::vector<std::int64_t> user_count(log.n_users(), 0);
  std::vector<std::int64_t> item_count(log.n_items(), 0);
  for (const Interaction& in : log.interactions) {
    ++user_count[in.user];
    ++item_count[in.item];
  }
  // Alternate full rescans until neither side loses a row. The maximal
  // k-core is unique, so scan order does not affect the result.
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t r = 0; r < log.interactions.size(); ++r) {
      if (!keep_row[r]) continue;
      const Interaction& in = log.interactions[r];
      if (user_count[in.user] < k || item_count[in.item] < k) {
        keep_row[r] = 0;
        --user_count[in.user];
        --item_count[in.item];
        changed = true;
      }
    }
  }
  return rebuild(log, keep_row);
}

InteractionLog min_interactions_filter(const InteractionLog& log, int m) {
  if (m < 1) throw ConfigError("min_interactions_filter requires m >= 1");
  std::vector<std::int64_t> user_count(log.n_users(), 0);
  for (const Interaction& in : log.interactions) ++user_count[in.user];
  std::vector<char> keep_row(log.interactions.size(), 0);
  for (std::size_t r = 0; r < log.interactions.size(); ++r)
    keep_row[r] = user_count[log.interactions[r].user] >= m;
  return rebuild(log, keep_row);
}

std::vector<std::vector<std::size_t>> user_rows_sorted(const InteractionLog& log) {
  std::vector<std::vector<std::size_t>> rows(log.n_users());
  for (std::size_t r = 0; r < log.interactions.size(); ++r)
    rows[log.interactions[r].user].push_back(r);
  // Rows were collected in file order, so a stable sort by timestamp breaks
  // ties by original position.
  for (auto& user_rows : rows) {
    std::stable_sort(user_rows.begin(), user_rows.end(), [&](std::size_t a, std::size_t b) {
      return log.interactions[a].timestamp < log.interactions[b].timestamp;
    });
  }
  return rows;
}

std::vector<std::vector<int>> user_sequences(const InteractionLog& log) {
  const auto rows = user_rows_sorted(log);
  std::vector<std::vector<int>> seqs(rows.size());
  for (std::size_t u = 0; u < rows.size(); ++u) {
    seqs[u].reserve(rows[u].size());
    for (std::size_t r : rows[u]) seqs[u].push_back(log.interactions[r].item);
  }
  return seqs;
}

InteractionLog dedup_consecutive(const InteractionLog& log) {
  std::vector<char> keep_row(log.interactions.size(), 1);
  for (const auto& rows : user_rows_sorted(log)) {
    int prev_item = -1;
    for (std::size_t r : rows) {
      const int item = log.interactions[r].item;
      if (item == prev_item)
        keep_row[r] = 0;
      else
        prev_item = item;
    }
  }
  return rebuild(log, keep_row);
}

DatasetStats compute_stats(const InteractionLog& log) {
  DatasetStats s;
  s.n_users = log.n_users();
  s.n_items = log.n_items();
  s.n_interactions = log.size();
  if (s.n_users > 0) s.avg_length = static_cast<double>(s.n_interactions) / s.n_users;
  if (s.n_users > 0 && s.n_items > 0)
    s.density = static_cast<double>(s.n_interactions) /
                (static_cast<double>(s.n_users) * static_cast<double>(s.n_items));
  return s;
}

void save_canonical(const InteractionLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  char buf[64];
  for (const auto& rows : user_rows_sorted(log)) {
    for (std::size_t r : rows) {
      const Interaction& in = log.interactions[r];
      std::snprintf(buf, sizeof(buf), "%.17g", in.timestamp);
      out << log.user_ids[in.user] << '\t' << log.item_ids[in.item] << '\t' << buf << '\n';
    }
  }
  if (!out) throw DataError("write failed: " + path);
}

InteractionLog load_canonical(const std::string& path) {
  ParseSchema schema;
  schema.delimiter = '\t';
  return parse_interactions_file(path, schema);
}

}  // namespace seqcheck
