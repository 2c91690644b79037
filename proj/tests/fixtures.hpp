#pragma once

#include <dyrep/event_stream.hpp>
#include <dyrep/params.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace dyrep::test {

inline Event ev(NodeId u, NodeId v, double t, EventType k = EventType::communication, int l = 0)
{
    return Event{u, v, t, static_cast<std::uint8_t>(l), k};
}

/// Random log on n nodes with roughly `assoc_share` association events; link
/// status is derived from an empty initial graph.
inline EventLog random_log(NodeId n, std::size_t count, std::uint64_t seed, double assoc_share = 0.2,
                           const Adjacency& a0 = {})
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<NodeId> node(0, n - 1);
    std::uniform_real_distribution<double> gap(0.01, 1.0);
    std::bernoulli_distribution assoc(assoc_share);
    std::vector<std::pair<NodeId, NodeId>> linked(a0.edges);
    const auto is_linked = [&](NodeId a, NodeId b) {
        const auto key = std::minmax(a, b);
        return std::find(linked.begin(), linked.end(), std::pair{key.first, key.second}) != linked.end();
    };
    std::vector<Event> events;
    double t = 0.0;
    while (events.size() < count) {
        const NodeId u = node(rng);
        const NodeId v = node(rng);
        if (u == v) continue;
        t += gap(rng);
        auto k = assoc(rng) ? EventType::association : EventType::communication;
        if (k == EventType::association && is_linked(u, v)) k = EventType::communication;
        if (k == EventType::association) {
            const auto key = std::minmax(u, v);
            linked.emplace_back(key.first, key.second);
        }
        events.push_back(ev(u, v, t, k));
    }
    return derive_link_status(make_log(std::move(events), n), a0);
}

/// Parameters with every entry drawn uniformly from [-scale, scale].
inline ModelParams random_params(NodeId n0, int d, std::uint64_t seed, double scale = 0.5)
{
    auto p = ModelParams::zeros(n0, d);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    p.for_each([&](ParamId, auto& t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
    });
    return p;
}

/// Scratch directory removed at scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("dyrep_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream(path, std::ios::binary) << text;
}

inline std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace dyrep::test
