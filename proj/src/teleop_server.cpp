#include <chrono>
#include <deque>
#include <memory>
#include <string>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "json.hpp"

#include "drive/errors.hpp"
#include "drive/teleop.hpp"

namespace drive {

namespace {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

}  // namespace

struct TeleopServer::Impl {
  class Connection;

  TeleopSession& session;
  std::chrono::milliseconds tick;
  asio::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  asio::steady_timer timer{ioc};
  std::chrono::steady_clock::time_point next_tick;
  std::shared_ptr<Connection> active;
  std::function<bool()> finished;

  Impl(TeleopSession& s, unsigned short port, int tick_ms)
      : session(s), tick(tick_ms) {
    if (tick_ms < 1) throw ConfigError("teleop: tick_ms must be >= 1");
    tcp::endpoint endpoint(asio::ip::make_address("0.0.0.0"), port);
    boost::system::error_code ec;
    acceptor.open(endpoint.protocol(), ec);
    if (!ec) acceptor.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor.bind(endpoint, ec);
    if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw IoError("teleop: cannot listen on port " + std::to_string(port) + ": " + ec.message());
  }

  void do_accept();
  void schedule_tick();
  void on_tick();
};

class TeleopServer::Impl::Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, Impl& server) : ws_(std::move(socket)), server_(server) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

  void send(std::string text) {
    if (closed_) return;
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) do_write();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    beast::error_code ec;
    ws_.next_layer().shutdown(tcp::socket::shutdown_both, ec);
    ws_.next_layer().close(ec);
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    if (server_.active) {
      close_after_write_ = true;
      send(nlohmann::json{{"type", "error"}, {"reason", "busy: a driver is already connected"}}
               .dump());
      return;
    }
    server_.active = shared_from_this();
    server_.session.connect();
    send(server_.session.hello_message());
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->on_read(ec);
    });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      detach();
      return;
    }
    std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    if (auto reply = server_.session.handle_message(text)) send(std::move(*reply));
    do_read();
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      self->on_write(ec);
                    });
  }

  void on_write(beast::error_code ec) {
    if (ec) {
      detach();
      return;
    }
    queue_.pop_front();
    if (!queue_.empty()) {
      do_write();
    } else if (close_after_write_) {
      ws_.async_close(websocket::close_code::try_again_later,
                      [self = shared_from_this()](beast::error_code) {});
    }
  }

  void detach() {
    if (server_.active.get() == this) {
      server_.active.reset();
      server_.session.disconnect();
    }
    close();
  }

  websocket::stream<tcp::socket> ws_;
  Impl& server_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  bool close_after_write_ = false;
  bool closed_ = false;
};

void TeleopServer::Impl::do_accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<Connection>(std::move(socket), *this)->start();
    do_accept();
  });
}

void TeleopServer::Impl::schedule_tick() {
  // Deadlines advance by whole ticks from the start, so late wakeups do not drift.
  next_tick += tick;
  timer.expires_at(next_tick);
  timer.async_wait([this](beast::error_code ec) {
    if (!ec) on_tick();
  });
}

void TeleopServer::Impl::on_tick() {
  std::vector<std::string> frames = session.tick();
  if (active) {
    for (auto& f : frames) active->send(std::move(f));
  }
  if (finished && finished()) {
    beast::error_code ec;
    acceptor.close(ec);
    if (active) active->close();
    ioc.stop();
    return;
  }
  schedule_tick();
}

TeleopServer::TeleopServer(TeleopSession& session, unsigned short port, int tick_ms)
    : impl_(std::make_unique<Impl>(session, port, tick_ms)) {}

TeleopServer::~TeleopServer() = default;

unsigned short TeleopServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void TeleopServer::run(bool handle_signals, std::function<bool()> finished) {
  Impl& s = *impl_;
  s.finished = std::move(finished);
  std::unique_ptr<asio::signal_set> signals;
  if (handle_signals) {
    signals = std::make_unique<asio::signal_set>(s.ioc, SIGINT, SIGTERM);
    signals->async_wait([this](beast::error_code ec, int) {
      if (!ec) stop();
    });
  }
  s.do_accept();
  s.next_tick = std::chrono::steady_clock::now();
  s.schedule_tick();
  s.ioc.run();
}

void TeleopServer::stop() {
  asio::post(impl_->ioc, [s = impl_.get()] {
    beast::error_code ec;
    s->acceptor.close(ec);
    s->timer.cancel();
    if (s->active) s->active->close();
    s->ioc.stop();
  });
}

}  // namespace drive
