#pragma once

#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "seqcheck/interactions.hpp"
#include "seqcheck/report.hpp"

namespace seqcheck::testing {

using Row = std::tuple<std::string, std::string, double>;  // user, item, ts

inline InteractionLog make_log(const std::vector<Row>& rows) {
  std::ostringstream csv;
  for (const auto& [u, i, ts] : rows) csv << u << ',' << i << ',' << ts << '\n';
  std::istringstream in(csv.str());
  ParseSchema schema;  // defaults: comma, cols 0/1/2
  return parse_interactions(in, schema);
}

// Published diagnostic values for nine reference datasets: per-model NDCG@10
// relative change, per-model top-10 Jaccard, and the 2-gram rule relative
// change. Used to pin the verdict rule.
struct ReferenceRow {
  const char* name;
  double ndcg_rel_a;  // attention-style model
  double ndcg_rel_r;  // recurrent-style model
  double jaccard_a;
  double jaccard_r;
  double rules2_rel;
  Verdict expected;
};

inline const std::vector<ReferenceRow>& reference_rows() {
  static const std::vector<ReferenceRow> rows = {
      {"retailrocket", -0.02, -0.05, 0.47, 0.33, -0.54, Verdict::weak},
      {"foursquare", -0.05, 0.00, 0.39, 1.00, -0.58, Verdict::weak},
      {"gowalla", -0.08, -0.02, 0.45, 0.26, -0.56, Verdict::weak},
      {"yelp", 0.05, -0.07, 0.37, 0.30, -0.95, Verdict::weak},
      {"steam", -0.12, -0.09, 0.59, 0.56, -1.00, Verdict::weak},
      {"ml20m", -0.61, -0.67, 0.12, 0.07, -1.00, Verdict::strong},
      {"music30", -0.92, -0.96, 0.12, 0.02, -1.00, Verdict::strong},
      {"zvuk", -0.70, -0.82, 0.11, 0.05, -0.99, Verdict::strong},
      {"megamarket", -0.45, -0.56, 0.19, 0.10, -0.98, Verdict::strong},
  };
  return rows;
}

inline DatasetResult result_from_reference(const ReferenceRow& row) {
  DatasetResult r;
  r.name = row.name;
  ModelAggregate a;
  a.arch = "attention";
  a.ndcg_rel = row.ndcg_rel_a;
  a.jaccard = row.jaccard_a;
  ModelAggregate b;
  b.arch = "recurrent";
  b.ndcg_rel = row.ndcg_rel_r;
  b.jaccard = row.jaccard_r;
  r.models = {a, b};
  RuleStats rs;
  rs.order = 2;
  rs.relative_change_defined = true;
  rs.relative_change = row.rules2_rel;
  r.rules = {rs};
  r.rules_weak = {row.rules2_rel > -0.90};
  return r;
}

}  // namespace seqcheck::testing
