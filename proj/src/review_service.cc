#include "skelpose/review_service.h"

#include <filesystem>

#include "httplib.h"

#include "skelpose/errors.h"

namespace skelpose {

namespace {

void send_json(httplib::Response &res, int status, const json &body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response &res, int status, const std::string &kind, const std::string &message) {
    send_json(res, status, {{"error", kind}, {"message", message}});
}

int int_param(const httplib::Request &req, const char *name, int fallback) {
    if (!req.has_param(name))
        return fallback;
    try {
        return std::stoi(req.get_param_value(name));
    } catch (const std::exception &) {
        return -1;
    }
}

} // namespace

ReviewService::ReviewService(ReviewStore &store, const std::string &static_dir)
    : store_(store), server_(std::make_unique<httplib::Server>()) {
    httplib::Server &s = *server_;

    s.Get("/items", [this](const httplib::Request &req, httplib::Response &res) {
        std::optional<Verdict> filter;
        if (req.has_param("verdict") && !req.get_param_value("verdict").empty()) {
            try {
                filter = verdict_from_string(req.get_param_value("verdict"));
            } catch (const Error &e) {
                send_error(res, 400, "Validation", e.what());
                return;
            }
        }
        const int offset = int_param(req, "offset", 0);
        const int limit = int_param(req, "limit", 100);
        if (offset < 0 || limit < 1) {
            send_error(res, 400, "Validation", "offset must be >= 0 and limit >= 1");
            return;
        }
        const std::vector<ReviewItem> items = store_.list(filter);
        json page = json::array();
        for (std::size_t i = offset; i < items.size() && page.size() < static_cast<std::size_t>(limit); ++i)
            page.push_back(review_item_json(items[i], false));
        send_json(res, 200, {{"items", page}, {"total", items.size()}, {"offset", offset}, {"limit", limit}});
    });

    s.Get(R"(/items/([^/]+))", [this](const httplib::Request &req, httplib::Response &res) {
        const auto item = store_.get(req.matches[1]);
        if (!item) {
            send_error(res, 404, "NotFound", "no item " + std::string(req.matches[1]));
            return;
        }
        send_json(res, 200, review_item_json(*item, true));
    });

    s.Post(R"(/items/([^/]+)/verdict)", [this](const httplib::Request &req, httplib::Response &res) {
        const std::string id = req.matches[1];
        Verdict v;
        try {
            const json body = json::parse(req.body);
            v = verdict_from_string(body.at("verdict").get<std::string>());
        } catch (const std::exception &e) {
            send_error(res, 400, "Validation", std::string("bad verdict body: ") + e.what());
            return;
        }
        switch (store_.set_verdict(id, v, utc_timestamp())) {
        case VerdictResult::Ok:
            send_json(res, 200, review_item_json(*store_.get(id), false));
            return;
        case VerdictResult::NotFound:
            send_error(res, 404, "NotFound", "no item " + id);
            return;
        case VerdictResult::Conflict:
            send_error(res, 409, "Conflict", "item " + id + " already reviewed");
            return;
        case VerdictResult::Invalid:
            send_error(res, 400, "Validation", "verdict must be acceptable or bad");
            return;
        }
    });

    s.Get("/export", [this](const httplib::Request &, httplib::Response &res) {
        send_json(res, 200, {{"training_set", store_.export_training_set()}});
    });

    s.set_exception_handler([](const httplib::Request &, httplib::Response &res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error &e) {
            send_error(res, 500, std::string(to_string(e.kind())), e.what());
        } catch (const std::exception &e) {
            send_error(res, 500, "Internal", e.what());
        }
    });

    if (!static_dir.empty() && std::filesystem::is_directory(static_dir))
        s.set_mount_point("/", static_dir);
}

ReviewService::~ReviewService() { stop(); }

int ReviewService::bind(const std::string &host, int port) {
    if (port == 0)
        return server_->bind_to_any_port(host);
    return server_->bind_to_port(host, port) ? port : -1;
}

bool ReviewService::listen_after_bind() { return server_->listen_after_bind(); }

void ReviewService::stop() {
    if (server_ && server_->is_running())
        server_->stop();
}

void ReviewService::wait_until_ready() const { server_->wait_until_ready(); }

} // namespace skelpose
