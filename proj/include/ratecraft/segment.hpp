#pragma once

#include <chrono>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace ratecraft {

using Vec = std::vector<double>;
using SegmentId = std::uint64_t;

enum class LabelSource { synthetic, human };

inline const char* to_string(LabelSource s) {
  return s == LabelSource::synthetic ? "synthetic" : "human";
}

inline LabelSource label_source_from_string(const std::string& s) {
  if (s == "synthetic") return LabelSource::synthetic;
  if (s == "human") return LabelSource::human;
  throw std::invalid_argument("unknown label source: " + s);
}

enum class Side { first, second };

inline std::int64_t wall_clock_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

// A fixed-length window of (state, action) pairs. Immutable once built; share
// through SegmentPtr.
struct Segment {
  SegmentId id = 0;
  std::vector<Vec> states;
  std::vector<Vec> actions;
  std::optional<double> gt_return;

  std::size_t length() const { return states.size(); }

  void validate() const {
    if (states.empty()) throw std::invalid_argument("segment " + std::to_string(id) + " is empty");
    if (states.size() != actions.size())
      throw std::invalid_argument("segment " + std::to_string(id) + ": states/actions length mismatch");
  }
};

using SegmentPtr = std::shared_ptr<const Segment>;

struct RatingLabel {
  SegmentId segment_id = 0;
  int class_index = 0;
  LabelSource source = LabelSource::synthetic;
  std::int64_t timestamp = 0;
};

struct PreferenceLabel {
  SegmentId first_segment_id = 0;
  SegmentId second_segment_id = 0;
  Side preferred = Side::first;
  LabelSource source = LabelSource::synthetic;
  std::int64_t timestamp = 0;
};

struct RatedEntry {
  SegmentPtr segment;
  RatingLabel label;
};

/// The labeled rating set. Keeps per-class and cumulative counts in sync with
/// the entry list.
class RatedDataset {
 public:
  RatedDataset(int num_classes, std::size_t segment_length)
      : num_classes_(num_classes), segment_length_(segment_length), counts_(num_classes, 0),
        cumulative_(num_classes, 0) {
    if (num_classes < 1) throw std::invalid_argument("rated dataset needs at least one class");
    if (segment_length < 1) throw std::invalid_argument("segment length must be >= 1");
  }

  int num_classes() const { return num_classes_; }
  std::size_t segment_length() const { return segment_length_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<RatedEntry>& entries() const { return entries_; }
  const std::vector<std::size_t>& class_counts() const { return counts_; }
  const std::vector<std::size_t>& cumulative_counts() const { return cumulative_; }

  void append(SegmentPtr segment, RatingLabel label) {
    if (!segment) throw std::invalid_argument("null segment");
    if (label.class_index < 0 || label.class_index >= num_classes_)
      throw std::out_of_range("rating class " + std::to_string(label.class_index) + " outside [0, " +
                              std::to_string(num_classes_ - 1) + "]");
    segment->validate();
    if (segment->length() != segment_length_)
      throw std::invalid_argument("segment length " + std::to_string(segment->length()) +
                                  " differs from dataset length " + std::to_string(segment_length_));
    if (label.segment_id != segment->id)
      throw std::invalid_argument("label references segment " + std::to_string(label.segment_id) +
                                  " but segment id is " + std::to_string(segment->id));
    entries_.push_back({std::move(segment), label});
    ++counts_[label.class_index];
    std::size_t running = 0;
    for (int j = 0; j < num_classes_; ++j) {
      running += counts_[j];
      cumulative_[j] = running;
    }
  }

 private:
  int num_classes_;
  std::size_t segment_length_;
  std::vector<RatedEntry> entries_;
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> cumulative_;
};

inline RatedDataset append_rating(RatedDataset dataset, SegmentPtr segment, RatingLabel label) {
  dataset.append(std::move(segment), label);
  return dataset;
}

inline std::vector<std::size_t> class_histogram(const RatedDataset& dataset) {
  return dataset.class_counts();
}

struct PreferenceEntry {
  SegmentPtr first;
  SegmentPtr second;
  PreferenceLabel label;
};

class PreferenceDataset {
 public:
  explicit PreferenceDataset(std::size_t segment_length) : segment_length_(segment_length) {}

  std::size_t segment_length() const { return segment_length_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<PreferenceEntry>& entries() const { return entries_; }

  void append(SegmentPtr first, SegmentPtr second, PreferenceLabel label) {
    if (!first || !second) throw std::invalid_argument("null segment");
    if (first->id == second->id) throw std::invalid_argument("preference pair must reference distinct segments");
    if (label.first_segment_id != first->id || label.second_segment_id != second->id)
      throw std::invalid_argument("preference label ids do not match segments");
    for (const auto* s : {first.get(), second.get()}) {
      s->validate();
      if (s->length() != segment_length_) throw std::invalid_argument("segment length differs from dataset length");
    }
    entries_.push_back({std::move(first), std::move(second), label});
  }

 private:
  std::size_t segment_length_;
  std::vector<PreferenceEntry> entries_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline nlohmann::json segment_fields(const Segment& s) {
  nlohmann::json j;
  j["id"] = s.id;
  j["states"] = s.states;
  j["actions"] = s.actions;
  j["gt_return"] = s.gt_return ? nlohmann::json(*s.gt_return) : nlohmann::json(nullptr);
  return j;
}

inline std::string header_line(int n, std::size_t length) {
  return "ratecraft-dataset v1 n=" + std::to_string(n) + " L=" + std::to_string(length);
}

struct Header {
  int n = 0;
  std::size_t length = 0;
};

inline Header parse_header(const std::string& line) {
  std::istringstream in(line);
  std::string magic, version, n_field, l_field, extra;
  in >> magic >> version >> n_field >> l_field;
  if (magic != "ratecraft-dataset" || version != "v1" || n_field.rfind("n=", 0) != 0 || l_field.rfind("L=", 0) != 0 ||
      (in >> extra))
    throw ParseError(1, "bad dataset header '" + line + "'");
  Header h;
  try {
    h.n = std::stoi(n_field.substr(2));
    h.length = static_cast<std::size_t>(std::stoul(l_field.substr(2)));
  } catch (const std::exception&) {
    throw ParseError(1, "bad dataset header '" + line + "'");
  }
  return h;
}

inline SegmentPtr segment_from_json(const nlohmann::json& j) {
  auto s = std::make_shared<Segment>();
  s->id = j.at("id").get<SegmentId>();
  s->states = j.at("states").get<std::vector<Vec>>();
  s->actions = j.at("actions").get<std::vector<Vec>>();
  if (!j.at("gt_return").is_null()) s->gt_return = j.at("gt_return").get<double>();
  s->validate();
  return s;
}

}  // namespace detail

// Line format: a header `ratecraft-dataset v1 n=<n> L=<L>` then one JSON object
// per line with keys id, states, actions, gt_return, label_kind, label_value,
// source, ts.
inline void write_dataset(std::ostream& out, const RatedDataset& dataset) {
  out << detail::header_line(dataset.num_classes(), dataset.segment_length()) << '\n';
  for (const auto& e : dataset.entries()) {
    auto j = detail::segment_fields(*e.segment);
    j["label_kind"] = "rating";
    j["label_value"] = e.label.class_index;
    j["source"] = to_string(e.label.source);
    j["ts"] = e.label.timestamp;
    out << j.dump() << '\n';
  }
}

inline std::string serialize(const RatedDataset& dataset) {
  std::ostringstream out;
  write_dataset(out, dataset);
  return out.str();
}

inline RatedDataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing dataset header");
  auto header = detail::parse_header(line);
  RatedDataset dataset(header.n, header.length);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (j.at("label_kind").get<std::string>() != "rating")
        throw std::invalid_argument("expected label_kind 'rating'");
      auto seg = detail::segment_from_json(j);
      RatingLabel label{seg->id, j.at("label_value").get<int>(),
                        label_source_from_string(j.at("source").get<std::string>()), j.at("ts").get<std::int64_t>()};
      dataset.append(std::move(seg), label);
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return dataset;
}

inline RatedDataset deserialize(const std::string& text) {
  std::istringstream in(text);
  return read_dataset(in);
}

// Preference datasets share the header and record keys. Each segment is
// written once with label_kind "segment"; each comparison is a record with
// label_kind "preference", null states/actions and
// label_value {first, second, preferred}.
inline void write_preference_dataset(std::ostream& out, const PreferenceDataset& dataset) {
  out << detail::header_line(2, dataset.segment_length()) << '\n';
  std::map<SegmentId, bool> written;
  auto emit_segment = [&](const Segment& s) {
    if (written[s.id]) return;
    written[s.id] = true;
    auto j = detail::segment_fields(s);
    j["label_kind"] = "segment";
    j["label_value"] = nullptr;
    j["source"] = nullptr;
    j["ts"] = nullptr;
    out << j.dump() << '\n';
  };
  for (const auto& e : dataset.entries()) {
    emit_segment(*e.first);
    emit_segment(*e.second);
    nlohmann::json j;
    j["id"] = nullptr;
    j["states"] = nullptr;
    j["actions"] = nullptr;
    j["gt_return"] = nullptr;
    j["label_kind"] = "preference";
    j["label_value"] = {{"first", e.label.first_segment_id},
                        {"second", e.label.second_segment_id},
                        {"preferred", e.label.preferred == Side::first ? "first" : "second"}};
    j["source"] = to_string(e.label.source);
    j["ts"] = e.label.timestamp;
    out << j.dump() << '\n';
  }
}

inline PreferenceDataset read_preference_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing dataset header");
  auto header = detail::parse_header(line);
  PreferenceDataset dataset(header.length);
  std::map<SegmentId, SegmentPtr> segments;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto kind = j.at("label_kind").get<std::string>();
      if (kind == "segment") {
        auto seg = detail::segment_from_json(j);
        segments[seg->id] = seg;
      } else if (kind == "preference") {
        const auto& v = j.at("label_value");
        PreferenceLabel label;
        label.first_segment_id = v.at("first").get<SegmentId>();
        label.second_segment_id = v.at("second").get<SegmentId>();
        auto side = v.at("preferred").get<std::string>();
        if (side != "first" && side != "second") throw std::invalid_argument("bad preferred side " + side);
        label.preferred = side == "first" ? Side::first : Side::second;
        label.source = label_source_from_string(j.at("source").get<std::string>());
        label.timestamp = j.at("ts").get<std::int64_t>();
        auto a = segments.find(label.first_segment_id);
        auto b = segments.find(label.second_segment_id);
        if (a == segments.end() || b == segments.end())
          throw std::invalid_argument("preference references unknown segment");
        dataset.append(a->second, b->second, label);
      } else {
        throw std::invalid_argument("unknown label_kind " + kind);
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return dataset;
}

}  // namespace ratecraft
