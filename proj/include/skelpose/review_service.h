#pragma once

#include <memory>
#include <string>

#include "skelpose/review.h"

namespace httplib {
class Server;
}

namespace skelpose {

// HTTP front end of a ReviewStore:
//   GET  /items?verdict=&offset=&limit=
//   GET  /items/{id}
//   POST /items/{id}/verdict   {"verdict": "acceptable" | "bad"}
//   GET  /export
// plus static files from `static_dir` when it exists.
class ReviewService {
  public:
    ReviewService(ReviewStore &store, const std::string &static_dir = "");
    ~ReviewService();

    // Returns the bound port, or -1.
    int bind(const std::string &host, int port);
    // Blocks until stop().
    bool listen_after_bind();
    void stop();
    void wait_until_ready() const;

  private:
    ReviewStore &store_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace skelpose
