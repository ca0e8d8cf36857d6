#include <condition_variable>
#include <mutex>
#include <thread>

#include "paveh/broker.hpp"

namespace paveh::broker {

struct Client::Impl {
  net::Socket sock;
  MessageHandler on_message;
  ErrorHandler on_error;
  std::size_t max_payload;
  std::thread reader;

  std::mutex write_mu;

  mutable std::mutex state_mu;
  std::condition_variable state_cv;
  std::uint64_t pongs = 0;
  bool open = true;
  std::string error;
  std::uint64_t next_sid = 1;

  void send(std::string_view bytes) {
    std::lock_guard lock(write_mu);
    try {
      sock.write_all(bytes);
    } catch (const net::NetError& e) {
      throw ClientError(e.what());
    }
  }

  void read_loop() {
    std::string buf;
    std::vector<char> chunk(64 * 1024);
    for (;;) {
      std::size_t n = 0;
      try {
        n = sock.read_some(chunk.data(), chunk.size());
      } catch (const net::NetError&) {
        break;
      }
      if (n == 0) break;
      buf.append(chunk.data(), n);
      std::size_t offset = 0;
      try {
        while (auto parsed = wire::parse_frame(
                   std::string_view(buf).substr(offset), max_payload)) {
          offset += parsed->consumed;
          dispatch(parsed->frame);
        }
      } catch (const wire::MalformedFrame& e) {
        set_error(std::string("protocol: ") + e.what());
        break;
      }
      buf.erase(0, offset);
    }
    std::lock_guard lock(state_mu);
    open = false;
    state_cv.notify_all();
  }

  void set_error(const std::string& message) {
    {
      std::lock_guard lock(state_mu);
      error = message;
    }
    if (on_error) on_error(message);
  }

  void dispatch(const wire::Frame& f) {
    using wire::FrameKind;
    switch (f.kind) {
      case FrameKind::Msg:
        if (on_message) on_message(f.subject, f.sid, f.payload);
        break;
      case FrameKind::Ping:
        try {
          send("PONG\r\n");
        } catch (const ClientError&) {
        }
        break;
      case FrameKind::Pong: {
        std::lock_guard lock(state_mu);
        ++pongs;
        state_cv.notify_all();
        break;
      }
      case FrameKind::Err:
        set_error(f.message);
        break;
      default:
        break;
    }
  }
};

Client::Client(const net::Endpoint& endpoint, MessageHandler on_message,
               ErrorHandler on_error, std::size_t max_payload)
    : impl_(std::make_unique<Impl>()) {
  try {
    impl_->sock = net::Socket::connect(endpoint);
  } catch (const net::NetError& e) {
    throw ClientError(e.what());
  }
  impl_->on_message = std::move(on_message);
  impl_->on_error = std::move(on_error);
  impl_->max_payload = max_payload;
  impl_->reader = std::thread([impl = impl_.get()] { impl->read_loop(); });
}

Client::~Client() { close(); }

std::uint64_t Client::subscribe(const wire::Subject& pattern) {
  std::uint64_t sid = 0;
  {
    std::lock_guard lock(impl_->state_mu);
    sid = impl_->next_sid++;
  }
  impl_->send(wire::encode_frame(wire::Frame::sub(pattern, sid)));
  return sid;
}

void Client::unsubscribe(std::uint64_t sid) {
  impl_->send(wire::encode_frame(wire::Frame::unsub(sid)));
}

void Client::publish(const wire::Subject& subject, std::string_view payload) {
  if (subject.has_wildcards())
    throw wire::InvalidSubject("cannot publish to a wildcard subject");
  std::string bytes;
  bytes.reserve(payload.size() + 64);
  wire::encode_frame_to(wire::Frame::pub(subject, std::string(payload)), bytes);
  impl_->send(bytes);
}

void Client::send_raw(std::string_view bytes) { impl_->send(bytes); }

bool Client::flush(std::chrono::milliseconds timeout) {
  std::uint64_t target = 0;
  {
    std::lock_guard lock(impl_->state_mu);
    if (!impl_->open) return false;
    target = impl_->pongs + 1;
  }
  impl_->send("PING\r\n");
  std::unique_lock lock(impl_->state_mu);
  return impl_->state_cv.wait_for(lock, timeout, [&] {
    return impl_->pongs >= target || !impl_->open;
  }) && impl_->pongs >= target;
}

bool Client::connected() const noexcept {
  std::lock_guard lock(impl_->state_mu);
  return impl_->open;
}

std::string Client::last_error() const {
  std::lock_guard lock(impl_->state_mu);
  return impl_->error;
}

void Client::close() {
  if (!impl_) return;
  impl_->sock.shutdown();
  if (impl_->reader.joinable()) impl_->reader.join();
  impl_->sock.close();
}

}  // namespace paveh::broker
