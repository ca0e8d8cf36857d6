#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "paveh/broker.hpp"

namespace paveh::broker {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             Clock::now().time_since_epoch())
      .count();
}

}  // namespace

struct Broker::Impl {
  struct Session {
    std::uint64_t id = 0;
    net::Socket sock;
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::string> out;
    bool closing = false;
    std::atomic<std::int64_t> last_inbound_ms{0};
    std::thread writer;
  };

  BrokerOptions options;
  net::Socket listener;
  std::uint16_t bound_port = 0;
  Router router;
  std::thread acceptor;
  std::atomic<bool> stopping{false};

  mutable std::shared_mutex sessions_mu;
  std::unordered_map<std::uint64_t, std::shared_ptr<Session>> sessions;
  // Reader threads are owned by the accept loop (and by stop() once the
  // accept loop has exited).
  std::unordered_map<std::uint64_t, std::thread> readers;
  std::mutex finished_mu;
  std::vector<std::uint64_t> finished;
  std::uint64_t next_session = 1;

  std::atomic<std::uint64_t> accepted{0}, published{0}, delivered{0},
      slow_consumers{0}, protocol_errors{0}, stale{0};

  explicit Impl(BrokerOptions opts) : options(std::move(opts)) {
    listener = net::Socket::listen(options.listen);
    bound_port = listener.local_port();
    acceptor = std::thread([this] { accept_loop(); });
  }

  // Queues an outbound frame. Returns false if the session is closing.
  bool enqueue(Session& s, std::string bytes) {
    {
      std::lock_guard lock(s.mu);
      if (s.closing) return false;
      if (s.out.size() >= options.queue_frames) {
        s.out.clear();
        s.out.push_back(wire::encode_frame(wire::Frame::err("slow consumer")));
        s.closing = true;
        ++slow_consumers;
        spdlog::warn("broker: session {} dropped as slow consumer", s.id);
      } else {
        s.out.push_back(std::move(bytes));
      }
    }
    s.cv.notify_one();
    return true;
  }

  // Queues a final error frame and marks the session for close.
  void close_with_error(Session& s, const std::string& message) {
    {
      std::lock_guard lock(s.mu);
      if (s.closing) return;
      s.out.push_back(wire::encode_frame(wire::Frame::err(message)));
      s.closing = true;
    }
    s.cv.notify_one();
  }

  void writer_loop(Session& s) {
    std::string batch;
    for (;;) {
      bool last = false;
      {
        std::unique_lock lock(s.mu);
        s.cv.wait(lock, [&] { return !s.out.empty() || s.closing; });
        batch.clear();
        while (!s.out.empty()) {
          batch += s.out.front();
          s.out.pop_front();
        }
        last = s.closing;
      }
      try {
        if (!batch.empty()) s.sock.write_all(batch);
      } catch (const net::NetError&) {
        last = true;
      }
      if (last) break;
    }
    s.sock.shutdown();
  }

  void handle(Session& s, wire::Frame& f, std::vector<Delivery>& scratch,
              std::string& encoded) {
    using wire::FrameKind;
    switch (f.kind) {
      case FrameKind::Ping:
        enqueue(s, "PONG\r\n");
        break;
      case FrameKind::Pong:
      case FrameKind::Ok:
        break;
      case FrameKind::Sub:
        if (!router.subscribe(s.id, f.sid, f.subject))
          close_with_error(s, "duplicate sid");
        break;
      case FrameKind::Unsub:
        router.unsubscribe(s.id, f.sid);
        break;
      case FrameKind::Pub: {
        ++published;
        scratch.clear();
        router.route(f.subject, scratch);
        if (scratch.empty()) break;
        std::shared_lock lock(sessions_mu);
        for (const auto& d : scratch) {
          auto it = sessions.find(d.session);
          if (it == sessions.end()) continue;
          encoded.clear();
          wire::encode_frame_to(wire::Frame::msg(f.subject, d.sid, f.payload),
                                encoded);
          if (enqueue(*it->second, encoded)) ++delivered;
        }
        break;
      }
      case FrameKind::Msg:
      case FrameKind::Err:
        ++protocol_errors;
        close_with_error(s, "unexpected client verb");
        break;
    }
  }

  void reader_loop(std::shared_ptr<Session> sp) {
    Session& s = *sp;
    s.writer = std::thread([this, &s] { writer_loop(s); });
    std::string buf;
    std::vector<char> chunk(64 * 1024);
    std::vector<Delivery> scratch;
    std::string encoded;
    const auto keepalive = options.keepalive.count();
    const auto poll_ms = std::chrono::milliseconds(
        std::clamp<std::int64_t>(keepalive / 4, 1, 1000));
    std::int64_t ping_sent_for = -1;
    s.last_inbound_ms = now_ms();

    for (;;) {
      {
        std::lock_guard lock(s.mu);
        if (s.closing) break;
      }
      bool readable = false;
      try {
        readable = s.sock.wait_readable(poll_ms);
      } catch (const net::NetError&) {
        break;
      }
      if (!readable) {
        const auto idle = now_ms() - s.last_inbound_ms;
        if (idle >= 2 * keepalive) {
          ++stale;
          close_with_error(s, "stale connection");
          break;
        }
        if (idle >= keepalive && ping_sent_for != s.last_inbound_ms) {
          ping_sent_for = s.last_inbound_ms;
          enqueue(s, "PING\r\n");
        }
        continue;
      }
      std::size_t n = 0;
      try {
        n = s.sock.read_some(chunk.data(), chunk.size());
      } catch (const net::NetError&) {
        break;
      }
      if (n == 0) break;
      s.last_inbound_ms = now_ms();
      buf.append(chunk.data(), n);

      std::size_t offset = 0;
      bool failed = false;
      try {
        while (auto parsed = wire::parse_frame(
                   std::string_view(buf).substr(offset), options.max_payload)) {
          offset += parsed->consumed;
          handle(s, parsed->frame, scratch, encoded);
        }
      } catch (const wire::MalformedFrame& e) {
        ++protocol_errors;
        close_with_error(s, e.what());
        failed = true;
      }
      buf.erase(0, offset);
      if (failed) break;
    }

    router.remove_session(s.id);
    {
      std::lock_guard lock(s.mu);
      s.closing = true;
    }
    s.cv.notify_one();
    s.writer.join();
    s.sock.shutdown();
    {
      std::unique_lock lock(sessions_mu);
      sessions.erase(s.id);
    }
    std::lock_guard lock(finished_mu);
    finished.push_back(s.id);
  }

  void reap() {
    std::vector<std::uint64_t> done;
    {
      std::lock_guard lock(finished_mu);
      done.swap(finished);
    }
    for (auto id : done) {
      auto it = readers.find(id);
      if (it == readers.end()) continue;
      it->second.join();
      readers.erase(it);
    }
  }

  void accept_loop() {
    while (!stopping) {
      net::Socket sock;
      try {
        sock = listener.accept();
      } catch (const net::NetError&) {
        break;
      }
      if (stopping) break;
      reap();
      auto s = std::make_shared<Session>();
      s->sock = std::move(sock);
      {
        std::unique_lock lock(sessions_mu);
        s->id = next_session++;
        sessions.emplace(s->id, s);
      }
      ++accepted;
      readers.emplace(s->id, std::thread([this, s] { reader_loop(s); }));
    }
  }

  void stop() {
    if (stopping.exchange(true)) return;
    listener.shutdown();
    if (acceptor.joinable()) acceptor.join();
    std::vector<std::shared_ptr<Session>> live;
    {
      std::shared_lock lock(sessions_mu);
      for (auto& [id, s] : sessions) live.push_back(s);
    }
    for (auto& s : live) {
      {
        std::lock_guard lock(s->mu);
        s->closing = true;
      }
      s->cv.notify_one();
      s->sock.shutdown();
    }
    for (auto& [id, t] : readers) t.join();
    readers.clear();
    finished.clear();
    listener.close();
  }
};

Broker::Broker(BrokerOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {}

Broker::~Broker() {
  if (impl_) impl_->stop();
}

Broker::Broker(Broker&&) noexcept = default;
Broker& Broker::operator=(Broker&&) noexcept = default;

net::Endpoint Broker::endpoint() const {
  return {impl_->options.listen.host, port()};
}

std::uint16_t Broker::port() const { return impl_->bound_port; }

BrokerStats Broker::stats() const {
  BrokerStats st;
  st.sessions_accepted = impl_->accepted;
  {
    std::shared_lock lock(impl_->sessions_mu);
    st.sessions_active = impl_->sessions.size();
  }
  st.published = impl_->published;
  st.delivered = impl_->delivered;
  st.slow_consumers = impl_->slow_consumers;
  st.protocol_errors = impl_->protocol_errors;
  st.stale_sessions = impl_->stale;
  return st;
}

void Broker::stop() { impl_->stop(); }

}  // namespace paveh::broker
