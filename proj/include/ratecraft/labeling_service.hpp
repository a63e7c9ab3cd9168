#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "active_query.hpp"
#include "envs.hpp"

namespace ratecraft {

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

/// Ticket queue shared between the experiment loop and HTTP handlers. The
/// loop publishes tickets and drains answers; handlers only read tickets and
/// enqueue validated answers, so the loop stays the single dataset writer.
class LabelingService {
 public:
  LabelingService(QueryKind kind, int n, std::unique_ptr<Env> renderer, int budget)
      : kind_(kind), n_(n), renderer_(std::move(renderer)), budget_(budget),
        class_counts_(kind == QueryKind::rating ? static_cast<std::size_t>(n) : 2, 0) {}

  QueryKind kind() const { return kind_; }

  void publish(const std::vector<QueryTicket>& tickets) {
    std::lock_guard lock(mutex_);
    for (const auto& t : tickets) {
      if (t.kind != kind_) throw std::invalid_argument("ticket kind does not match service modality");
      tickets_[t.id] = {t, false};
      order_.push_back(t.id);
      ++issued_;
    }
  }

  /// Answers accepted since the last drain, in arrival order.
  std::vector<TeacherAnswer> drain_answers() {
    std::lock_guard lock(mutex_);
    std::vector<TeacherAnswer> out(inbox_.begin(), inbox_.end());
    inbox_.clear();
    return out;
  }

  /// Blocks until no ticket is pending or the timeout expires. Returns true
  /// when every published ticket has been answered.
  bool wait_all_answered(std::chrono::duration<double> timeout) {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, timeout, [&] { return pending_locked() == 0 || closed_; }) && pending_locked() == 0;
  }

  std::size_t pending() const {
    std::lock_guard lock(mutex_);
    return pending_locked();
  }

  std::size_t issued() const {
    std::lock_guard lock(mutex_);
    return issued_;
  }

  std::size_t answered() const {
    std::lock_guard lock(mutex_);
    return answered_;
  }

  void set_curve(nlohmann::json rows) {
    std::lock_guard lock(mutex_);
    curve_ = std::move(rows);
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    cv_.notify_all();
  }

  ServiceResponse get_ticket() const {
    std::lock_guard lock(mutex_);
    for (TicketId id : order_) {
      const auto& entry = tickets_.at(id);
      if (entry.answered) continue;
      const auto& t = entry.ticket;
      nlohmann::json body = {{"ticket_id", t.id}, {"kind", to_string(t.kind)}, {"n", n_},
                             {"budget_remaining", budget_remaining_locked()}};
      if (t.kind == QueryKind::rating) {
        body["frames"] = render_trace(*renderer_, *t.segments.at(0));
      } else {
        body["frame_pairs"] = {render_trace(*renderer_, *t.segments.at(0)), render_trace(*renderer_, *t.segments.at(1))};
      }
      return {200, std::move(body)};
    }
    return {204, nullptr};
  }

  ServiceResponse post_answer(const nlohmann::json& body) {
    std::lock_guard lock(mutex_);
    if (!body.is_object() || !body.contains("ticket_id") || !body["ticket_id"].is_number_integer() ||
        body["ticket_id"].get<std::int64_t>() < 0)
      return invalid("ticket_id must be a non-negative integer");
    const auto id = body["ticket_id"].get<TicketId>();
    auto it = tickets_.find(id);
    if (it == tickets_.end()) return invalid("unknown ticket " + std::to_string(id));
    if (it->second.answered) return {409, {{"error", "ticket " + std::to_string(id) + " already answered"}}};
    TeacherAnswer answer;
    answer.ticket_id = id;
    if (kind_ == QueryKind::rating) {
      if (!body.contains("class") || !body["class"].is_number_integer()) return invalid("class must be an integer");
      const int cls = body["class"].get<int>();
      if (cls < 0 || cls >= n_) return invalid("class must lie in [0, " + std::to_string(n_ - 1) + "]");
      answer.rating_class = cls;
      ++class_counts_[static_cast<std::size_t>(cls)];
    } else {
      if (!body.contains("preferred") || !body["preferred"].is_string()) return invalid("preferred must be a string");
      const auto side = body["preferred"].get<std::string>();
      if (side != "first" && side != "second") return invalid("preferred must be 'first' or 'second'");
      answer.preferred = side == "first" ? Side::first : Side::second;
      ++class_counts_[side == "first" ? 0 : 1];
    }
    it->second.answered = true;
    ++answered_;
    inbox_.push_back(answer);
    cv_.notify_all();
    return {200, {{"ok", true}, {"ticket_id", id}}};
  }

  ServiceResponse get_stats() const {
    std::lock_guard lock(mutex_);
    return {200,
            {{"labels_total", answered_},
             {"class_counts", class_counts_},
             {"budget_remaining", budget_remaining_locked()},
             {"kind", to_string(kind_)},
             {"n", n_},
             {"pending", pending_locked()}}};
  }

  ServiceResponse get_curve() const {
    std::lock_guard lock(mutex_);
    return {200, curve_.is_null() ? nlohmann::json::array() : curve_};
  }

 private:
  struct Entry {
    QueryTicket ticket;
    bool answered = false;
  };

  static ServiceResponse invalid(const std::string& why) { return {422, {{"error", why}}}; }

  std::size_t pending_locked() const { return issued_ - answered_; }
  long budget_remaining_locked() const { return static_cast<long>(budget_) - static_cast<long>(answered_); }

  QueryKind kind_;
  int n_;
  std::unique_ptr<Env> renderer_;
  int budget_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::map<TicketId, Entry> tickets_;
  std::deque<TicketId> order_;
  std::deque<TeacherAnswer> inbox_;
  std::vector<std::size_t> class_counts_;
  std::size_t issued_ = 0;
  std::size_t answered_ = 0;
  nlohmann::json curve_;
  bool closed_ = false;
};

}  // namespace ratecraft
