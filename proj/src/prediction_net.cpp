#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <string>

#include "crowdnav/prediction.hpp"

namespace crowdnav {

namespace {

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return static_cast<int>(left);
}

class Socket {
 public:
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() {
    if (fd_ >= 0) ::close(fd_);
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  int fd() const { return fd_; }

 private:
  int fd_;
};

}  // namespace

SampleSet external_predict(const HistoryWindow& history, int horizon, int num_samples,
                           const std::string& endpoint, int timeout_ms) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= endpoint.size()) {
    throw ProtocolError("external_predict: endpoint must be host:port");
  }
  const std::string host = endpoint.substr(0, colon);
  const std::string port = endpoint.substr(colon + 1);

  const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);

  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
    throw ProtocolError("external_predict: cannot resolve endpoint " + endpoint);
  }

  int raw_fd = ::socket(res->ai_family, res->ai_socktype | SOCK_NONBLOCK, res->ai_protocol);
  if (raw_fd < 0) {
    ::freeaddrinfo(res);
    throw ProtocolError("external_predict: socket() failed");
  }
  Socket sock(raw_fd);

  int rc = ::connect(sock.fd(), res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc < 0 && errno != EINPROGRESS) {
    throw ProtocolError("external_predict: endpoint unreachable: " + endpoint);
  }
  if (rc < 0) {
    pollfd pfd{sock.fd(), POLLOUT, 0};
    const int wait = remaining_ms(deadline);
    if (wait <= 0 || ::poll(&pfd, 1, wait) <= 0) {
      throw StaleSampleError("external_predict: connect timed out");
    }
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(sock.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) throw ProtocolError("external_predict: endpoint unreachable: " + endpoint);
  }

  std::string request = encode_prediction_request(history, horizon, num_samples);
  request.push_back('\n');

  std::size_t sent = 0;
  while (sent < request.size()) {
    const ssize_t n = ::send(sock.fd(), request.data() + sent, request.size() - sent, MSG_NOSIGNAL);
    if (n > 0) {
      sent += static_cast<std::size_t>(n);
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
      pollfd pfd{sock.fd(), POLLOUT, 0};
      const int wait = remaining_ms(deadline);
      if (wait <= 0 || ::poll(&pfd, 1, wait) <= 0) throw StaleSampleError("external_predict: send timed out");
      continue;
    }
    throw ProtocolError("external_predict: send failed");
  }

  std::string line;
  char buf[4096];
  for (;;) {
    const ssize_t n = ::recv(sock.fd(), buf, sizeof(buf), 0);
    if (n > 0) {
      line.append(buf, static_cast<std::size_t>(n));
      if (line.find('\n') != std::string::npos) break;
      if (line.size() > (1u << 26)) throw ProtocolError("external_predict: response too large");
      continue;
    }
    if (n == 0) throw ProtocolError("external_predict: connection closed before response");
    if (errno == EAGAIN || errno == EWOULDBLOCK) {
      pollfd pfd{sock.fd(), POLLIN, 0};
      const int wait = remaining_ms(deadline);
      if (wait <= 0 || ::poll(&pfd, 1, wait) <= 0) throw StaleSampleError("external_predict: response timed out");
      continue;
    }
    throw ProtocolError("external_predict: recv failed");
  }
  line.erase(line.find('\n'));

  SampleSet set = decode_prediction_response(line, horizon, num_samples,
                                             static_cast<int>(history.humans.size()), history.dt);
  set.stamp = history.robot.empty() ? 0.0 : history.robot.back().stamp;
  return set;
}

}  // namespace crowdnav
