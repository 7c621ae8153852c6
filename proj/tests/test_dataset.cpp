#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "murec/dataset.hpp"
#include "murec/synthetic.hpp"

using namespace murec;
using namespace murec::data;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& contents) {
    static int counter = 0;
    path = (std::filesystem::temp_directory_path() /
            ("murec_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".tsv"))
               .string();
    std::ofstream out(path);
    out << contents;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

InteractionLog log_of(std::vector<std::vector<int>> sequences, int num_items) {
  InteractionLog log;
  log.sequences = std::move(sequences);
  log.num_items = num_items;
  for (std::size_t u = 0; u < log.sequences.size(); ++u)
    log.user_raw.push_back(std::to_string(u));
  for (int i = 0; i < num_items; ++i) log.item_raw.push_back(std::to_string(i));
  return log;
}

}  // namespace

TEST_CASE("ingest: rows sorted by the third column per user") {
  TempFile f("7\t3\t2\n7\t5\t0\n7\t1\t1\n");
  const auto log = ingest_tsv(f.path);
  CHECK(log.num_users() == 1);
  CHECK(log.sequences[0].size() == 3);
  // raw items 5,1,3 in time order; dense ids assigned by first appearance
  CHECK(log.item_raw[log.sequences[0][0]] == "5");
  CHECK(log.item_raw[log.sequences[0][1]] == "1");
  CHECK(log.item_raw[log.sequences[0][2]] == "3");
}

TEST_CASE("ingest: interleaved users are partitioned") {
  TempFile f("a\tx\t0\nb\ty\t0\na\tz\t1\nb\tx\t1\n");
  const auto log = ingest_tsv(f.path);
  CHECK(log.num_users() == 2);
  CHECK(log.sequences[0].size() == 2);
  CHECK(log.sequences[1].size() == 2);
  CHECK(log.num_items == 3);
}

TEST_CASE("ingest: malformed rows name the line") {
  TempFile f("1\t2\t0\n1\tbad\tnot_an_int\n");
  try {
    ingest_tsv(f.path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("ingest: empty file rejected") {
  TempFile f("");
  CHECK_THROWS_AS(ingest_tsv(f.path), ParseError);
}

TEST_CASE("ingest: ml1m and amazon formats") {
  TempFile ml("1::31::3.5::100\n1::20::4::90\n");
  const auto ml_log = ingest(ml.path, LogFormat::ml1m);
  CHECK(ml_log.sequences[0].size() == 2);
  CHECK(ml_log.item_raw[ml_log.sequences[0][0]] == "20");

  TempFile az("B001,u9,5.0,200\nB002,u9,1.0,100\n");
  const auto az_log = ingest(az.path, LogFormat::amazon_csv);
  CHECK(az_log.sequences[0].size() == 2);
  CHECK(az_log.item_raw[az_log.sequences[0][0]] == "B002");
}

TEST_CASE("re-ingesting an emitted TSV reproduces the log") {
  synth::SynthConfig cfg;
  cfg.num_users = 50;
  cfg.seq_len = 8;
  const auto ds = synth::generate_dataset(cfg);
  TempFile f("");
  write_interactions_tsv(ds.log, f.path);
  const auto round = ingest_tsv(f.path);
  CHECK(round.sequences == ds.log.sequences);
  CHECK(round.num_items == ds.log.num_items);
}

TEST_CASE("build_examples: chunking arithmetic") {
  std::vector<int> seq(65);
  for (int i = 0; i < 65; ++i) seq[i] = i % 7;
  const auto chunks = build_examples(log_of({seq}, 7));
  REQUIRE(chunks.size() == 3);
  CHECK(chunks[0].items.size() == 30);
  CHECK(chunks[1].items.size() == 30);
  CHECK(chunks[2].items.size() == 5);
  CHECK(chunks[1].items[0] == seq[30]);
}

TEST_CASE("build_examples: short users dropped with a count") {
  BuildStats stats;
  const auto chunks = build_examples(log_of({{1, 2}, {1, 2, 3}}, 4), kMaxSeqLen, &stats);
  CHECK(chunks.size() == 1);
  CHECK(stats.dropped_users == 1);
}

TEST_CASE("build_examples: trailing windows too short for splitting are dropped") {
  std::vector<int> seq(31, 1);
  BuildStats stats;
  const auto chunks = build_examples(log_of({seq}, 3), kMaxSeqLen, &stats);
  CHECK(chunks.size() == 1);
  CHECK(stats.dropped_chunks == 1);
}

TEST_CASE("leave_one_out: positional protocol") {
  const auto splits = make_splits(log_of({{10, 11, 12, 13}}, 14));
  REQUIRE(splits.test.size() == 1);
  REQUIRE(splits.val.size() == 1);
  REQUIRE(splits.train.size() == 1);

  CHECK(splits.label_of(splits.test[0]) == 13);
  CHECK(splits.context_len(splits.test[0]) == 3);
  CHECK(splits.label_of(splits.val[0]) == 12);
  CHECK(splits.context_len(splits.val[0]) == 2);
  CHECK(splits.label_of(splits.train[0]) == 11);
  CHECK(splits.context_len(splits.train[0]) == 1);
  CHECK(splits.context_of(splits.train[0])[0] == 10);
}

TEST_CASE("leave_one_out: one test example per chunk") {
  std::vector<std::vector<int>> sequences(100, std::vector<int>{1, 2, 3, 4});
  const auto splits = make_splits(log_of(sequences, 5));
  CHECK(splits.test.size() == 100);
  CHECK(splits.val.size() == 100);
  CHECK(splits.train.size() == 100);
}

TEST_CASE("leave_one_out: reconstruction recovers each window") {
  synth::SynthConfig cfg;
  cfg.num_users = 40;
  cfg.seq_len = 37;  // forces chunking
  const auto ds = synth::generate_dataset(cfg);
  const auto splits = make_splits(ds.log);
  for (std::size_t c = 0; c < splits.chunks.size(); ++c) {
    const auto& items = splits.chunks[c].items;
    std::vector<int> rebuilt;
    // first item is context-only; every later position is some split's label
    rebuilt.push_back(items[0]);
    for (int pos = 1; pos < static_cast<int>(items.size()); ++pos)
      rebuilt.push_back(splits.label_of({static_cast<int>(c), pos}));
    CHECK(rebuilt == items);
  }
}

TEST_CASE("materialize: padding contract") {
  const auto splits = make_splits(log_of({{10, 11, 12, 13, 14}}, 15));
  const auto ex = materialize(splits, splits.test[0]);
  CHECK(ex.valid_len == 4);
  CHECK(ex.label == 14);
  CHECK(static_cast<int>(ex.context.size()) == kMaxSeqLen);
  for (int i = 0; i < ex.valid_len; ++i) CHECK(ex.context[i] == 10 + i);
  for (int i = ex.valid_len; i < kMaxSeqLen; ++i) CHECK(ex.context[i] == splits.padding_id());
  CHECK(ex.label != splits.padding_id());
}

TEST_CASE("item stats: counts and probabilities") {
  // train labels: user [1,1,2,x,y] -> train positions 1..2 give labels 1,2
  const auto splits = make_splits(log_of({{1, 1, 2, 3, 4}, {1, 1, 1, 3, 4}}, 5));
  const auto stats = compute_item_stats(splits);
  // train labels: chunk1 -> {1,2}, chunk2 -> {1,1}
  CHECK(stats.counts[1] == 3);
  CHECK(stats.counts[2] == 1);
  CHECK(stats.total == 4);
  CHECK(stats.p[1] == doctest::Approx(0.75));
  CHECK(stats.p[2] == doctest::Approx(0.25));
  double sum = 0.0;
  for (double p : stats.p) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("head/tail partition: ceiling rule and tie-breaks") {
  ItemStats stats;
  stats.counts = {5, 5, 5, 5, 5};  // all ties -> head = lowest ids
  stats.p.assign(5, 0.2);
  stats.logp.assign(5, 0.0);
  stats.total = 25;
  const auto [head, tail] = head_tail_partition(stats);
  CHECK(head == std::vector<int>{0});  // ceil(0.2*5) = 1
  CHECK(tail.size() == 4);

  ItemStats stats10;
  stats10.counts = {1, 9, 2, 8, 3, 7, 4, 6, 5, 10};
  stats10.p.assign(10, 0.0);
  stats10.logp.assign(10, 0.0);
  stats10.total = 55;
  const auto [head10, tail10] = head_tail_partition(stats10);
  CHECK(head10 == std::vector<int>{9, 1});  // counts 10 and 9
  CHECK(head10.size() == 2);

  long min_head = 1000, max_tail = -1;
  for (int i : head10) min_head = std::min(min_head, stats10.counts[i]);
  for (int i : tail10) max_tail = std::max(max_tail, stats10.counts[i]);
  CHECK(min_head >= max_tail);
}

TEST_CASE("head/tail partition: items without train labels belong to neither set") {
  ItemStats stats;
  stats.counts = {3, 0, 1, 2, 0};
  stats.p = {0.5, 0.0, 1.0 / 6, 2.0 / 6, 0.0};
  stats.logp.assign(5, 0.0);
  stats.total = 6;
  const auto [head, tail] = head_tail_partition(stats);
  CHECK(head.size() + tail.size() == 3);
  CHECK(head == std::vector<int>{0});
}
