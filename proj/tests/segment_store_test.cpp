#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ratecraft/segment.hpp"

using namespace ratecraft;

namespace {

SegmentPtr make_segment(SegmentId id, std::size_t length = 3, double base = 0.0) {
  auto s = std::make_shared<Segment>();
  s->id = id;
  for (std::size_t t = 0; t < length; ++t) {
    s->states.push_back({base + 0.1 * static_cast<double>(t), -0.5});
    s->actions.push_back({0.25 * static_cast<double>(t)});
  }
  s->gt_return = base * 2.0 + 0.125;
  return s;
}

RatingLabel label_for(const SegmentPtr& s, int cls) { return {s->id, cls, LabelSource::synthetic, 1700000000000}; }

}  // namespace

TEST(SegmentStore, AppendToEmpty) {
  RatedDataset d(3, 3);
  auto s = make_segment(0);
  d = append_rating(d, s, label_for(s, 0));
  EXPECT_EQ(d.size(), 1u);
  EXPECT_EQ(d.class_counts(), (std::vector<std::size_t>{1, 0, 0}));
}

TEST(SegmentStore, AppendUpdatesCumulativeCounts) {
  RatedDataset d(2, 3);
  SegmentId id = 0;
  for (int c : {0, 0, 1, 1, 1, 1}) {
    auto s = make_segment(id++);
    d.append(s, label_for(s, c));
  }
  auto s = make_segment(id++);
  d.append(s, label_for(s, 1));
  EXPECT_EQ(d.class_counts(), (std::vector<std::size_t>{2, 5}));
  EXPECT_EQ(d.cumulative_counts(), (std::vector<std::size_t>{2, 7}));
}

TEST(SegmentStore, AppendRejectsClassOutOfRange) {
  RatedDataset d(4, 3);
  auto s = make_segment(0);
  EXPECT_THROW(d.append(s, label_for(s, 4)), std::out_of_range);
  EXPECT_THROW(d.append(s, label_for(s, -1)), std::out_of_range);
  EXPECT_EQ(d.size(), 0u);
}

TEST(SegmentStore, AppendRejectsLengthMismatchAndEmptySegments) {
  RatedDataset d(2, 3);
  auto longer = make_segment(0, 4);
  EXPECT_THROW(d.append(longer, label_for(longer, 0)), std::invalid_argument);
  auto empty = std::make_shared<Segment>();
  EXPECT_THROW(d.append(empty, label_for(empty, 0)), std::invalid_argument);
}

TEST(SegmentStore, Histogram) {
  RatedDataset d(2, 3);
  SegmentId id = 0;
  for (int c : {0, 0, 1, 1, 1, 1}) {
    auto s = make_segment(id++);
    d.append(s, label_for(s, c));
  }
  EXPECT_EQ(class_histogram(d), (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(class_histogram(RatedDataset(5, 3)), (std::vector<std::size_t>(5, 0)));

  RatedDataset top(4, 3);
  for (SegmentId i = 0; i < 3; ++i) {
    auto s = make_segment(i);
    top.append(s, label_for(s, 3));
  }
  EXPECT_EQ(class_histogram(top), (std::vector<std::size_t>{0, 0, 0, 3}));
}

TEST(SegmentStore, DuplicateRatingsOfOneSegmentAreIndependentEntries) {
  RatedDataset d(3, 3);
  auto s = make_segment(7);
  d.append(s, label_for(s, 0));
  d.append(s, label_for(s, 2));
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.class_counts(), (std::vector<std::size_t>{1, 0, 1}));
}

TEST(SegmentStore, CountsMatchBruteForceOnRandomSequences) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 7);
    const std::size_t appends = rng() % 40;
    RatedDataset d(n, 2);
    std::vector<int> labels;
    for (std::size_t i = 0; i < appends; ++i) {
      const int c = static_cast<int>(rng() % static_cast<unsigned>(n));
      auto s = make_segment(i, 2);
      d.append(s, label_for(s, c));
      labels.push_back(c);
    }
    std::size_t total = 0;
    for (auto k : d.class_counts()) total += k;
    ASSERT_EQ(total, appends);
    for (int j = 0; j < n; ++j) {
      std::size_t brute = 0;
      for (int c : labels) brute += c <= j ? 1 : 0;
      ASSERT_EQ(d.cumulative_counts()[j], brute);
    }
  }
}

TEST(SegmentStore, SerializeRoundTripIsByteIdenticalOnRandomDatasets) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 5);
    RatedDataset d(n, 4);
    const std::size_t entries = trial == 0 ? 10 : rng() % 15;
    for (std::size_t i = 0; i < entries; ++i) {
      auto s = std::make_shared<Segment>();
      s->id = 1000 + i;
      for (int t = 0; t < 4; ++t) {
        s->states.push_back({u(rng), u(rng), u(rng)});
        s->actions.push_back({u(rng)});
      }
      if (rng() % 3) s->gt_return = u(rng) * 1e3;
      RatingLabel l{s->id, static_cast<int>(rng() % static_cast<unsigned>(n)),
                    rng() % 2 ? LabelSource::human : LabelSource::synthetic, static_cast<std::int64_t>(rng() % 100000)};
      d.append(s, l);
    }
    const std::string first = serialize(d);
    RatedDataset back = deserialize(first);
    ASSERT_EQ(serialize(back), first);
    ASSERT_EQ(back.size(), d.size());
    ASSERT_EQ(back.class_counts(), d.class_counts());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto& a = d.entries()[i];
      const auto& b = back.entries()[i];
      ASSERT_EQ(a.segment->states, b.segment->states);
      ASSERT_EQ(a.segment->actions, b.segment->actions);
      ASSERT_EQ(a.segment->gt_return, b.segment->gt_return);
      ASSERT_EQ(a.label.source, b.label.source);
      ASSERT_EQ(a.label.timestamp, b.label.timestamp);
    }
  }
}

TEST(SegmentStore, EmptyDatasetIsHeaderOnly) {
  RatedDataset d(5, 50);
  const std::string text = serialize(d);
  EXPECT_EQ(text, "ratecraft-dataset v1 n=5 L=50\n");
  RatedDataset back = deserialize(text);
  EXPECT_TRUE(back.empty());
  EXPECT_EQ(back.num_classes(), 5);
  EXPECT_EQ(back.segment_length(), 50u);
}

TEST(SegmentStore, RecordsUseNormativeFieldNames) {
  RatedDataset d(2, 3);
  auto s = make_segment(3);
  d.append(s, label_for(s, 1));
  std::istringstream in(serialize(d));
  std::string header, record;
  std::getline(in, header);
  std::getline(in, record);
  auto j = nlohmann::json::parse(record);
  for (const char* key : {"id", "states", "actions", "gt_return", "label_kind", "label_value", "source", "ts"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j.size(), 8u);
  EXPECT_EQ(j["label_kind"], "rating");
  EXPECT_EQ(j["label_value"], 1);
}

TEST(SegmentStore, TruncatedFinalRecordNamesItsLine) {
  RatedDataset d(2, 3);
  for (SegmentId i = 0; i < 3; ++i) {
    auto s = make_segment(i);
    d.append(s, label_for(s, static_cast<int>(i % 2)));
  }
  std::string text = serialize(d);
  text.resize(text.size() - 20);
  try {
    deserialize(text);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(SegmentStore, BadHeaderAndBadClassAreParseErrors) {
  EXPECT_THROW(deserialize("not-a-dataset v1 n=2 L=3\n"), ParseError);
  RatedDataset d(2, 3);
  auto s = make_segment(0);
  d.append(s, label_for(s, 1));
  std::string text = serialize(d);
  text.replace(text.find("n=2"), 3, "n=1");
  try {
    deserialize(text);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(SegmentStore, PreferenceDatasetRoundTrip) {
  PreferenceDataset d(3);
  auto a = make_segment(1, 3, 1.0);
  auto b = make_segment(2, 3, 2.0);
  auto c = make_segment(3, 3, 3.0);
  d.append(a, b, {1, 2, Side::second, LabelSource::synthetic, 5});
  d.append(c, a, {3, 1, Side::first, LabelSource::human, 6});
  std::ostringstream out;
  write_preference_dataset(out, d);
  std::istringstream in(out.str());
  PreferenceDataset back = read_preference_dataset(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.entries()[0].label.preferred, Side::second);
  EXPECT_EQ(back.entries()[1].first->id, 3u);
  EXPECT_EQ(back.entries()[1].label.source, LabelSource::human);
  std::ostringstream again;
  write_preference_dataset(again, back);
  EXPECT_EQ(again.str(), out.str());
}

TEST(SegmentStore, PreferencePairMustBeDistinct) {
  PreferenceDataset d(3);
  auto a = make_segment(1);
  EXPECT_THROW(d.append(a, a, {1, 1, Side::first, LabelSource::synthetic, 0}), std::invalid_argument);
}
