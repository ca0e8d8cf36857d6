#include <thread>

#include <fmt/format.h>

#include "httplib.h"
#include "paveh/connector.hpp"

namespace paveh::connector {

struct MetricsServer::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
};

MetricsServer::MetricsServer(std::function<IngestMetrics()> source, const net::Endpoint& listen)
    : impl_(std::make_unique<Impl>()) {
  impl_->server.Get("/metrics", [source = std::move(source)](const httplib::Request&,
                                                            httplib::Response& res) {
    res.set_content(format_metrics_text(metric_pairs(source())), "text/plain; version=0.0.4");
  });
  impl_->port = listen.port == 0 ? impl_->server.bind_to_any_port(listen.host)
                                 : (impl_->server.bind_to_port(listen.host, listen.port)
                                        ? listen.port
                                        : -1);
  if (impl_->port <= 0)
    throw net::NetError(fmt::format("cannot bind metrics endpoint {}", listen.str()));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
}

MetricsServer::~MetricsServer() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::uint16_t MetricsServer::port() const noexcept {
  return static_cast<std::uint16_t>(impl_->port);
}

std::string fetch_metrics(const net::Endpoint& endpoint) {
  httplib::Client client(endpoint.host, endpoint.port);
  client.set_connection_timeout(2);
  client.set_read_timeout(5);
  auto res = client.Get("/metrics");
  if (!res)
    throw net::NetError(fmt::format("GET http://{}/metrics failed: {}", endpoint.str(),
                                    httplib::to_string(res.error())));
  if (res->status != 200)
    throw net::NetError(fmt::format("GET http://{}/metrics returned {}", endpoint.str(), res->status));
  return res->body;
}

}  // namespace paveh::connector
