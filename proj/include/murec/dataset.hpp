#pragma once

#include <string>
#include <utility>
#include <vector>

#include "murec/common.hpp"

namespace murec::data {

// Per-user chronological item-id sequences over a dense vocabulary.
struct InteractionLog {
  std::vector<std::vector<int>> sequences;  // dense user id -> items, time order
  std::vector<std::string> user_raw;        // dense user id -> raw id
  std::vector<std::string> item_raw;        // dense item id -> raw id
  int num_items = 0;

  int num_users() const { return static_cast<int>(sequences.size()); }
};

enum class LogFormat {
  tsv,         // user <TAB> item <TAB> position-or-timestamp
  ml1m,        // user::item::rating::timestamp
  amazon_csv,  // item,user,rating,timestamp
};

LogFormat parse_log_format(const std::string& name);

InteractionLog ingest(const std::string& path, LogFormat format);
InteractionLog ingest_tsv(const std::string& path);

void write_interactions_tsv(const InteractionLog& log, const std::string& path);
void write_id_map_tsv(const std::vector<std::string>& raw_ids, const std::string& path);

constexpr int kMaxSeqLen = 30;

// One fixed-length window of a user's history. Sequences longer than max_len
// are split into consecutive non-overlapping windows, each owned by the user.
struct Chunk {
  int user = 0;
  std::vector<int> items;
};

struct BuildStats {
  long dropped_users = 0;   // users with fewer than 3 interactions
  long dropped_chunks = 0;  // trailing windows too short for leave-one-out
};

std::vector<Chunk> build_examples(const InteractionLog& log, int max_len = kMaxSeqLen,
                                  BuildStats* stats = nullptr);

// Identifies one (context, label) example: label = chunks[chunk].items[pos],
// context = items[0..pos).
struct ExampleRef {
  int chunk = 0;
  int pos = 0;
};

struct DatasetSplits {
  std::vector<Chunk> chunks;
  std::vector<ExampleRef> train, val, test;
  int num_items = 0;
  int num_users = 0;
  int max_len = kMaxSeqLen;

  int padding_id() const { return num_items; }
  int label_of(const ExampleRef& ref) const { return chunks[ref.chunk].items[ref.pos]; }
  const int* context_of(const ExampleRef& ref) const { return chunks[ref.chunk].items.data(); }
  int context_len(const ExampleRef& ref) const { return ref.pos; }
  int owner_of(const ExampleRef& ref) const { return chunks[ref.chunk].user; }
};

DatasetSplits leave_one_out(std::vector<Chunk> chunks, int num_items, int num_users,
                            int max_len = kMaxSeqLen);

// Convenience: ingest -> chunk -> split in one call.
DatasetSplits make_splits(const InteractionLog& log, int max_len = kMaxSeqLen,
                          BuildStats* stats = nullptr);

// Fixed-width materialized view of an example. Positions >= valid_len hold
// the padding id.
struct SequenceExample {
  std::vector<int> context;
  int valid_len = 0;
  int label = 0;
  int owner = 0;
};

SequenceExample materialize(const DatasetSplits& splits, const ExampleRef& ref);

void write_split_tsv(const DatasetSplits& splits, const std::vector<ExampleRef>& refs,
                     const std::string& path);

// Train-label frequencies, the empirical distribution they induce, and the
// Pareto head/tail partition.
struct ItemStats {
  std::vector<long> counts;  // n_y over train labels
  std::vector<double> p;     // n_y / total, zero for unseen items
  std::vector<double> logp;  // log p, only valid where p > 0
  long total = 0;
  std::vector<int> head_items, tail_items;
  std::vector<char> in_head;

  int num_items() const { return static_cast<int>(counts.size()); }
};

ItemStats compute_item_stats(const DatasetSplits& splits);

// Sorts items with n_y > 0 by count descending (ties by ascending id); the
// first ceil(0.2 * #items) form the head. Fills stats.head_items/tail_items.
std::pair<std::vector<int>, std::vector<int>> head_tail_partition(ItemStats& stats);

}  // namespace murec::data
