#include "lorasim/event_queue.hpp"

#include <string>

namespace lorasim {

EventId EventQueue::schedule(SimTime at, std::function<void()> fn, Phase phase) {
  if (at < now_) {
    throw std::logic_error("event scheduled in the past: " + std::to_string(at.count()) + " us < now " +
                           std::to_string(now_.count()) + " us");
  }
  const EventId id = next_id_++;
  heap_.push({at, static_cast<int>(phase), id});
  handlers_.emplace(id, std::move(fn));
  return id;
}

bool EventQueue::cancel(EventId id) { return handlers_.erase(id) > 0; }

void EventQueue::drop_cancelled() {
  while (!heap_.empty() && handlers_.find(heap_.top().seq) == handlers_.end()) heap_.pop();
}

std::optional<SimTime> EventQueue::next_time() {
  drop_cancelled();
  if (heap_.empty()) return std::nullopt;
  return heap_.top().time;
}

bool EventQueue::step() {
  drop_cancelled();
  if (heap_.empty()) return false;
  const Key k = heap_.top();
  heap_.pop();
  auto node = handlers_.extract(k.seq);
  now_ = k.time;
  ++executed_;
  node.mapped()();
  return true;
}

void EventQueue::run_until(SimTime end) {
  while (true) {
    const auto t = next_time();
    if (!t || *t >= end) break;
    step();
  }
  if (end > now_) now_ = end;
}

}  // namespace lorasim
