#include <mutex>
#include <unordered_map>

#include "paveh/broker.hpp"

namespace paveh::broker {

struct Router::Node {
  std::unordered_map<std::string, std::unique_ptr<Node>> literal;
  std::unique_ptr<Node> star;
  std::vector<Delivery> exact;  // patterns ending at this node
  std::vector<Delivery> tail;   // patterns ending with '>' below this node

  bool empty() const {
    return literal.empty() && !star && exact.empty() && tail.empty();
  }
};

namespace {

void match(const auto& node, const std::vector<std::string>& tokens,
           std::size_t i, std::vector<Delivery>& out) {
  if (i == tokens.size()) {
    out.insert(out.end(), node.exact.begin(), node.exact.end());
    return;
  }
  out.insert(out.end(), node.tail.begin(), node.tail.end());
  if (auto it = node.literal.find(tokens[i]); it != node.literal.end())
    match(*it->second, tokens, i + 1, out);
  if (node.star) match(*node.star, tokens, i + 1, out);
}

template <typename Node>
bool erase_path(Node& node, const std::vector<std::string>& tokens,
                std::size_t i, Delivery d) {
  auto drop = [d](std::vector<Delivery>& v) { std::erase(v, d); };
  if (i == tokens.size()) {
    drop(node.exact);
  } else if (tokens[i] == ">") {
    drop(node.tail);
  } else if (tokens[i] == "*") {
    if (node.star && erase_path(*node.star, tokens, i + 1, d)) node.star.reset();
  } else if (auto it = node.literal.find(tokens[i]); it != node.literal.end()) {
    if (erase_path(*it->second, tokens, i + 1, d)) node.literal.erase(it);
  }
  return node.empty();
}

}  // namespace

Router::Router() : root_(std::make_unique<Node>()) {}
Router::~Router() = default;

bool Router::subscribe(std::uint64_t session, std::uint64_t sid,
                       const wire::Subject& pattern) {
  std::unique_lock lock(mu_);
  if (!index_.emplace(std::pair{session, sid}, pattern).second) return false;
  Node* node = root_.get();
  for (const auto& token : pattern.tokens()) {
    if (token == ">") {
      node->tail.push_back({session, sid});
      return true;
    }
    auto& next = token == "*" ? node->star : node->literal[token];
    if (!next) next = std::make_unique<Node>();
    node = next.get();
  }
  node->exact.push_back({session, sid});
  return true;
}

void Router::erase_locked(std::uint64_t session, std::uint64_t sid,
                          const wire::Subject& pattern) {
  erase_path(*root_, pattern.tokens(), 0, Delivery{session, sid});
}

bool Router::unsubscribe(std::uint64_t session, std::uint64_t sid) {
  std::unique_lock lock(mu_);
  auto it = index_.find({session, sid});
  if (it == index_.end()) return false;
  erase_locked(session, sid, it->second);
  index_.erase(it);
  return true;
}

void Router::remove_session(std::uint64_t session) {
  std::unique_lock lock(mu_);
  auto it = index_.lower_bound({session, 0});
  while (it != index_.end() && it->first.first == session) {
    erase_locked(session, it->first.second, it->second);
    it = index_.erase(it);
  }
}

void Router::route(const wire::Subject& subject, std::vector<Delivery>& out) const {
  std::shared_lock lock(mu_);
  match(*root_, subject.tokens(), 0, out);
}

std::vector<Delivery> Router::route(const wire::Subject& subject) const {
  std::vector<Delivery> out;
  route(subject, out);
  return out;
}

std::size_t Router::size() const {
  std::shared_lock lock(mu_);
  return index_.size();
}

}  // namespace paveh::broker
