#include "murec/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace murec::data {

namespace {

struct RawRow {
  long user_dense;
  long item_dense;
  long long order;
  long input_rank;  // tie-break: preserve file order
};

bool parse_ll(const std::string& field, long long& out) {
  if (field.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoll(field, &pos);
  } catch (...) {
    return false;
  }
  return pos == field.size();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = line.find(sep, start);
    if (end == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, end - start));
    start = end + 1;
  }
  return fields;
}

std::vector<std::string> split_ml1m(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = line.find("::", start);
    if (end == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, end - start));
    start = end + 2;
  }
  return fields;
}

}  // namespace

LogFormat parse_log_format(const std::string& name) {
  if (name == "tsv") return LogFormat::tsv;
  if (name == "ml1m") return LogFormat::ml1m;
  if (name == "amazon_csv" || name == "amazon-csv") return LogFormat::amazon_csv;
  throw ConfigError("unknown log format: " + name);
}

InteractionLog ingest(const std::string& path, LogFormat format) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open: " + path);

  std::unordered_map<std::string, long> user_ids, item_ids;
  InteractionLog log;
  std::vector<RawRow> rows;
  std::string line;
  long line_no = 0;

  auto dense_id = [](std::unordered_map<std::string, long>& map,
                     std::vector<std::string>& raw, const std::string& key) {
    auto it = map.find(key);
    if (it != map.end()) return it->second;
    const long id = static_cast<long>(raw.size());
    map.emplace(key, id);
    raw.push_back(key);
    return id;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::string user, item, order_field;
    switch (format) {
      case LogFormat::tsv: {
        const auto f = split(line, '\t');
        if (f.size() != 3)
          throw ParseError("line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
        user = f[0];
        item = f[1];
        order_field = f[2];
        break;
      }
      case LogFormat::ml1m: {
        const auto f = split_ml1m(line);
        if (f.size() != 4)
          throw ParseError("line " + std::to_string(line_no) + ": expected user::item::rating::timestamp");
        user = f[0];
        item = f[1];
        order_field = f[3];
        break;
      }
      case LogFormat::amazon_csv: {
        const auto f = split(line, ',');
        if (f.size() != 4)
          throw ParseError("line " + std::to_string(line_no) + ": expected item,user,rating,timestamp");
        user = f[1];
        item = f[0];
        order_field = f[3];
        break;
      }
    }

    long long order = 0;
    if (!parse_ll(order_field, order))
      throw ParseError("line " + std::to_string(line_no) + ": non-integer position/timestamp '" +
                       order_field + "'");
    RawRow row;
    row.user_dense = dense_id(user_ids, log.user_raw, user);
    row.item_dense = dense_id(item_ids, log.item_raw, item);
    row.order = order;
    row.input_rank = line_no;
    rows.push_back(row);
  }
  if (rows.empty()) throw ParseError("empty input: " + path);

  log.num_items = static_cast<int>(log.item_raw.size());
  log.sequences.resize(log.user_raw.size());

  std::stable_sort(rows.begin(), rows.end(), [](const RawRow& a, const RawRow& b) {
    if (a.user_dense != b.user_dense) return a.user_dense < b.user_dense;
    if (a.order != b.order) return a.order < b.order;
    return a.input_rank < b.input_rank;
  });
  for (const RawRow& row : rows)
    log.sequences[row.user_dense].push_back(static_cast<int>(row.item_dense));
  return log;
}

InteractionLog ingest_tsv(const std::string& path) { return ingest(path, LogFormat::tsv); }

void write_interactions_tsv(const InteractionLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path);
  for (std::size_t u = 0; u < log.sequences.size(); ++u)
    for (std::size_t t = 0; t < log.sequences[u].size(); ++t)
      out << u << '\t' << log.sequences[u][t] << '\t' << t << '\n';
}

void write_id_map_tsv(const std::vector<std::string>& raw_ids, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path);
  for (std::size_t dense = 0; dense < raw_ids.size(); ++dense)
    out << raw_ids[dense] << '\t' << dense << '\n';
}

std::vector<Chunk> build_examples(const InteractionLog& log, int max_len, BuildStats* stats) {
  if (max_len < 3) throw ConfigError("max_len must be at least 3");
  BuildStats local;
  std::vector<Chunk> chunks;
  for (int u = 0; u < log.num_users(); ++u) {
    const auto& seq = log.sequences[u];
    if (static_cast<int>(seq.size()) < 3) {
      ++local.dropped_users;
      continue;
    }
    for (std::size_t start = 0; start < seq.size(); start += max_len) {
      const std::size_t len = std::min<std::size_t>(max_len, seq.size() - start);
      if (len < 3) {
        ++local.dropped_chunks;
        continue;
      }
      Chunk chunk;
      chunk.user = u;
      chunk.items.assign(seq.begin() + start, seq.begin() + start + len);
      chunks.push_back(std::move(chunk));
    }
  }
  if (stats) *stats = local;
  return chunks;
}

DatasetSplits leave_one_out(std::vector<Chunk> chunks, int num_items, int num_users, int max_len) {
  DatasetSplits splits;
  splits.chunks = std::move(chunks);
  splits.num_items = num_items;
  splits.num_users = num_users;
  splits.max_len = max_len;
  for (int c = 0; c < static_cast<int>(splits.chunks.size()); ++c) {
    const int len = static_cast<int>(splits.chunks[c].items.size());
    splits.test.push_back({c, len - 1});
    splits.val.push_back({c, len - 2});
    for (int pos = 1; pos <= len - 3; ++pos) splits.train.push_back({c, pos});
  }
  return splits;
}

DatasetSplits make_splits(const InteractionLog& log, int max_len, BuildStats* stats) {
  return leave_one_out(build_examples(log, max_len, stats), log.num_items, log.num_users(),
                       max_len);
}

SequenceExample materialize(const DatasetSplits& splits, const ExampleRef& ref) {
  SequenceExample ex;
  ex.context.assign(splits.max_len, splits.padding_id());
  const int* ctx = splits.context_of(ref);
  ex.valid_len = splits.context_len(ref);
  std::copy(ctx, ctx + ex.valid_len, ex.context.begin());
  ex.label = splits.label_of(ref);
  ex.owner = splits.owner_of(ref);
  return ex;
}

void write_split_tsv(const DatasetSplits& splits, const std::vector<ExampleRef>& refs,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path);
  for (const ExampleRef& ref : refs) {
    out << splits.owner_of(ref) << '\t' << splits.label_of(ref) << '\t';
    const int* ctx = splits.context_of(ref);
    const int len = splits.context_len(ref);
    for (int i = 0; i < len; ++i) out << ctx[i] << (i + 1 < len ? ',' : '\t');
    out << '\n';
  }
}

ItemStats compute_item_stats(const DatasetSplits& splits) {
  if (splits.train.empty()) throw ConfigError("compute_item_stats: empty train split");
  ItemStats stats;
  stats.counts.assign(splits.num_items, 0);
  for (const ExampleRef& ref : splits.train) ++stats.counts[splits.label_of(ref)];
  stats.total = static_cast<long>(splits.train.size());
  stats.p.assign(splits.num_items, 0.0);
  stats.logp.assign(splits.num_items, 0.0);
  for (int i = 0; i < splits.num_items; ++i) {
    if (stats.counts[i] > 0) {
      stats.p[i] = static_cast<double>(stats.counts[i]) / static_cast<double>(stats.total);
      stats.logp[i] = std::log(stats.p[i]);
    }
  }
  head_tail_partition(stats);
  return stats;
}

std::pair<std::vector<int>, std::vector<int>> head_tail_partition(ItemStats& stats) {
  std::vector<int> observed;
  for (int i = 0; i < stats.num_items(); ++i)
    if (stats.counts[i] > 0) observed.push_back(i);
  std::sort(observed.begin(), observed.end(), [&](int a, int b) {
    if (stats.counts[a] != stats.counts[b]) return stats.counts[a] > stats.counts[b];
    return a < b;
  });
  const long head_size =
      static_cast<long>(std::ceil(0.2 * static_cast<double>(observed.size())));
  stats.head_items.assign(observed.begin(), observed.begin() + head_size);
  stats.tail_items.assign(observed.begin() + head_size, observed.end());
  stats.in_head.assign(stats.num_items(), 0);
  for (int i : stats.head_items) stats.in_head[i] = 1;
  return {stats.head_items, stats.tail_items};
}

}  // namespace murec::data
