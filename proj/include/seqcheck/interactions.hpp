#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace seqcheck {

// One interaction after id densification. Original ids live in the log's
// vocabularies.
struct Interaction {
  int user = 0;
  int item = 0;
  double timestamp = 0.0;
};

// Flat interaction corpus in original file order plus bidirectional
// id <-> dense-index vocabularies. Dense indices are contiguous from 0.
struct InteractionLog {
  std::vector<Interaction> interactions;
  std::vector<std::string> user_ids;  // dense index -> opaque id
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, int> user_index;
  std::unordered_map<std::string, int> item_index;
  // Parallel to interactions when the source had an event column, else empty.
  std::vector<std::string> event_types;

  std::size_t n_users() const { return user_ids.size(); }
  std::size_t n_items() const { return item_ids.size(); }
  std::size_t size() const { return interactions.size(); }
};

struct DatasetStats {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_interactions = 0;
  double avg_length = 0.0;
  double density = 0.0;
};

// Column references are names when the file has a header, otherwise 0-based
// indices given as decimal strings. event_col may be empty (no event column).
struct ParseSchema {
  char delimiter = ',';
  bool has_header = false;
  std::string user_col = "0";
  std::string item_col = "1";
  std::string time_col = "2";
  std::string event_col;
  bool fail_fast = true;
};

struct ParseReport {
  std::size_t rows_skipped = 0;
  std::vector<std::string> warnings;
};

InteractionLog parse_interactions(std::istream& source, const ParseSchema& schema,
                                  ParseReport* report = nullptr);
InteractionLog parse_interactions_file(const std::string& path, const ParseSchema& schema,
                                       ParseReport* report = nullptr);

// Keeps only interactions with event_type == keep; empty keep is the identity.
// Emits a warning via report when the label is absent from the log.
InteractionLog filter_event_type(const InteractionLog& log, const std::string& keep,
                                 ParseReport* report = nullptr);

// Iterative removal of users and items with fewer than k interactions until
// the unique maximal fixed point. k counts interactions, not distinct partners.
InteractionLog k_core_filter(const InteractionLog& log, int k);

// Drops users with fewer than m interactions. Single pass, items untouched
// (vocabularies still rebuilt dense).
InteractionLog min_interactions_filter(const InteractionLog& log, int m);

// Collapses runs of equal consecutive items within each user sequence
// (per-user order: timestamp, ties by original file position).
InteractionLog dedup_consecutive(const InteractionLog& log);

DatasetStats compute_stats(const InteractionLog& log);

// Per-user item sequences ordered by timestamp with stable ties.
std::vector<std::vector<int>> user_sequences(const InteractionLog& log);
// Same ordering, but returning row indices into log.interactions.
std::vector<std::vector<std::size_t>> user_rows_sorted(const InteractionLog& log);

// Canonical persisted form: "user \t item \t timestamp" sorted by
// (user index, timestamp, original position).
void save_canonical(const InteractionLog& log, const std::string& path);
InteractionLog load_canonical(const std::string& path);

}  // namespace seqcheck
