#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "seqcheck/common.hpp"
#include "seqcheck/interactions.hpp"
#include "seqcheck/rng.hpp"

#include "helpers.hpp"

using namespace seqcheck;
using seqcheck::testing::make_log;

namespace {

// Multiset view independent of index assignment.
std::multiset<std::tuple<std::string, std::string, double>> triples(const InteractionLog& log) {
  std::multiset<std::tuple<std::string, std::string, double>> out;
  for (const Interaction& in : log.interactions)
    out.insert({log.user_ids[in.user], log.item_ids[in.item], in.timestamp});
  return out;
}

// Brute-force k-core: delete-and-rescan until no interaction is removed.
std::multiset<std::tuple<std::string, std::string, double>> kcore_oracle(
    const InteractionLog& log, int k) {
  auto rows = triples(log);
  for (;;) {
    std::map<std::string, int> ucount, icount;
    for (const auto& [u, i, ts] : rows) {
      ++ucount[u];
      ++icount[i];
    }
    decltype(rows) kept;
    for (const auto& row : rows)
      if (ucount[std::get<0>(row)] >= k && icount[std::get<1>(row)] >= k) kept.insert(row);
    if (kept.size() == rows.size()) return rows;
    rows = std::move(kept);
  }
}

InteractionLog random_log(Rng& rng, int max_users, int max_items, int max_len) {
  std::vector<seqcheck::testing::Row> rows;
  const int n_users = 1 + static_cast<int>(rng.uniform_int(max_users));
  for (int u = 0; u < n_users; ++u) {
    const int len = static_cast<int>(rng.uniform_int(max_len + 1));
    for (int t = 0; t < len; ++t)
      rows.push_back({"u" + std::to_string(u),
                      "i" + std::to_string(rng.uniform_int(max_items)),
                      static_cast<double>(rng.uniform_int(20))});
  }
  return make_log(rows);
}

}  // namespace

TEST_CASE("parse basic csv") {
  std::istringstream in("u1,i1,10\nu1,i2,20\nu2,i1,15\n");
  ParseSchema schema;
  const InteractionLog log = parse_interactions(in, schema);
  CHECK(log.n_users() == 2);
  CHECK(log.n_items() == 2);
  CHECK(log.size() == 3);
  CHECK(log.interactions[0].timestamp == 10.0);
  CHECK(log.user_ids[log.interactions[2].user] == "u2");
}

TEST_CASE("parse empty file") {
  std::istringstream in("");
  const InteractionLog log = parse_interactions(in, ParseSchema{});
  CHECK(log.size() == 0);
  CHECK(log.n_users() == 0);
  CHECK(log.n_items() == 0);
}

TEST_CASE("parse bad timestamp fail-fast names the line") {
  std::istringstream in("u1,i1,10\nu1,i2,oops\n");
  try {
    parse_interactions(in, ParseSchema{});
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("parse lenient skips bad rows with count") {
  std::istringstream in("u1,i1,10\nu1,i2,oops\nu2,i1,15\n");
  ParseSchema schema;
  schema.fail_fast = false;
  ParseReport report;
  const InteractionLog log = parse_interactions(in, schema, &report);
  CHECK(log.size() == 2);
  CHECK(report.rows_skipped == 1);
}

TEST_CASE("parse header with named columns") {
  std::istringstream in("when;who;what\n10;u1;i1\n20;u1;i2\n");
  ParseSchema schema;
  schema.delimiter = ';';
  schema.has_header = true;
  schema.user_col = "who";
  schema.item_col = "what";
  schema.time_col = "when";
  const InteractionLog log = parse_interactions(in, schema);
  CHECK(log.size() == 2);
  CHECK(log.user_ids[0] == "u1");
}

TEST_CASE("event filter keeps one type and warns when absent") {
  std::istringstream in("u1,i1,1,view\nu1,i2,2,buy\nu2,i1,3,view\n");
  ParseSchema schema;
  schema.event_col = "3";
  const InteractionLog log = parse_interactions(in, schema);

  ParseReport report;
  const InteractionLog views = filter_event_type(log, "view", &report);
  CHECK(views.size() == 2);
  CHECK(report.warnings.empty());

  const InteractionLog none = filter_event_type(log, "wishlist", &report);
  CHECK(none.size() == 0);
  CHECK(report.warnings.size() == 1);

  // Empty keep is the identity even without an event column.
  const InteractionLog same = filter_event_type(log, "");
  CHECK(triples(same) == triples(log));
}

TEST_CASE("k-core cascade example empties the log") {
  // k=2, users {A:[x,y], B:[x,z]}: removal cascades to an empty log.
  const InteractionLog log =
      make_log({{"A", "x", 1}, {"A", "y", 2}, {"B", "x", 3}, {"B", "z", 4}});
  const InteractionLog out = k_core_filter(log, 2);
  CHECK(out.size() == 0);
  CHECK(out.n_users() == 0);
  CHECK(out.n_items() == 0);
}

TEST_CASE("k-core identity when already satisfied") {
  const InteractionLog log =
      make_log({{"A", "x", 1}, {"A", "y", 2}, {"B", "x", 3}, {"B", "y", 4}});
  CHECK(triples(k_core_filter(log, 2)) == triples(log));
}

TEST_CASE("k-core matches brute-force oracle on random tiny logs") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const InteractionLog log = random_log(rng, 8, 8, 8);
    const int k = 1 + static_cast<int>(rng.uniform_int(4));
    const InteractionLog out = k_core_filter(log, k);
    CHECK(triples(out) == kcore_oracle(log, k));
    // Idempotence.
    CHECK(triples(k_core_filter(out, k)) == triples(out));
  }
}

TEST_CASE("min_interactions_filter") {
  const InteractionLog log =
      make_log({{"A", "x", 1}, {"B", "x", 2}, {"B", "y", 3}, {"B", "x", 4}});
  const InteractionLog out = min_interactions_filter(log, 2);
  CHECK(out.size() == 3);
  CHECK(out.n_users() == 1);
  CHECK(triples(min_interactions_filter(log, 1)) == triples(log));
}

TEST_CASE("dedup collapses adjacent repeats only") {
  // (i, i, j) -> (i, j)
  const InteractionLog a = make_log({{"u", "i", 1}, {"u", "i", 2}, {"u", "j", 3}});
  const InteractionLog da = dedup_consecutive(a);
  CHECK(da.size() == 2);
  CHECK(da.item_ids[da.interactions[0].item] == "i");
  CHECK(da.item_ids[da.interactions[1].item] == "j");

  // (i, j, i) unchanged.
  const InteractionLog b = make_log({{"u", "i", 1}, {"u", "j", 2}, {"u", "i", 3}});
  CHECK(dedup_consecutive(b).size() == 3);

  // Single interaction unchanged; idempotence.
  const InteractionLog c = make_log({{"u", "i", 1}});
  CHECK(dedup_consecutive(c).size() == 1);
  CHECK(triples(dedup_consecutive(da)) == triples(da));
}

TEST_CASE("dedup respects per-user timestamp order, not file order") {
  const InteractionLog log = make_log({{"u", "i", 5}, {"u", "j", 1}, {"u", "i", 3}});
  // Chronological order is j, i, i -> dedups to j, i.
  CHECK(dedup_consecutive(log).size() == 2);
}

TEST_CASE("stats arithmetic") {
  const InteractionLog log = make_log({{"A", "x", 1}, {"A", "y", 2}, {"B", "x", 3}});
  const DatasetStats s = compute_stats(log);
  CHECK(s.n_users == 2);
  CHECK(s.n_items == 2);
  CHECK(s.n_interactions == 3);
  CHECK(s.avg_length == doctest::Approx(1.5));
  CHECK(s.density == doctest::Approx(0.75));

  const DatasetStats one = compute_stats(make_log({{"A", "x", 1}}));
  CHECK(one.density == doctest::Approx(1.0));
  CHECK(one.avg_length == doctest::Approx(1.0));

  const DatasetStats empty = compute_stats(InteractionLog{});
  CHECK(empty.n_interactions == 0);
  CHECK(empty.density == 0.0);
}

TEST_CASE("canonical save/load round trip") {
  Rng rng(11);
  const InteractionLog log = random_log(rng, 6, 6, 10);
  const std::string path = "test_canonical_roundtrip.tsv";
  save_canonical(log, path);
  const InteractionLog back = load_canonical(path);
  CHECK(triples(back) == triples(log));
  // Sequences (the analysis-relevant view) survive the round trip.
  auto seq_items = [](const InteractionLog& l) {
    std::multiset<std::vector<std::string>> out;
    for (const auto& seq : user_sequences(l)) {
      std::vector<std::string> ids;
      for (int item : seq) ids.push_back(l.item_ids[item]);
      out.insert(ids);
    }
    return out;
  };
  CHECK(seq_items(back) == seq_items(log));
  std::remove(path.c_str());
}
