#pragma once

#include <dyrep/types.hpp>

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dyrep {

/// One observed dyadic event (u, v, t, l, k). Times are in hours.
struct Event {
    NodeId u = 0;
    NodeId v = 0;
    double t = 0.0;
    std::uint8_t l = 0;
    EventType k = EventType::communication;

    friend bool operator==(const Event&, const Event&) = default;
};

/// Maps external node labels to dense integer ids in order of first insertion.
class NodeDictionary {
public:
    NodeId intern(std::string_view label);
    std::optional<NodeId> find(std::string_view label) const;
    const std::string& label(NodeId id) const { return labels_.at(static_cast<std::size_t>(id)); }
    NodeId size() const noexcept { return static_cast<NodeId>(labels_.size()); }

private:
    std::unordered_map<std::string, NodeId> ids_;
    std::vector<std::string> labels_;
};

using DictionaryPtr = std::shared_ptr<const NodeDictionary>;

/// Time-ordered, validated event sequence. Immutable once built.
struct EventLog {
    std::vector<Event> events;
    NodeId n_nodes = 0;
    std::pair<double, double> horizon{0.0, 0.0};
    DictionaryPtr dictionary;
    bool link_status_given = false;

    std::size_t size() const noexcept { return events.size(); }
    bool empty() const noexcept { return events.empty(); }
    std::string label(NodeId id) const;
};

/// Initial association snapshot as an undirected edge list with u < v.
struct Adjacency {
    NodeId n = 0;
    std::vector<std::pair<NodeId, NodeId>> edges;

    void add(NodeId a, NodeId b);
    void normalize();
};

struct SlotSplit {
    EventLog train;
    std::vector<EventLog> test_slots;
    std::vector<std::size_t> empty_slots;

    EventLog test() const;
};

enum class EventFormat { csv, jsonl };

EventFormat format_from_path(const std::filesystem::path& path);

/// Parses and validates an event file. Records are stably sorted by time and node
/// ids are assigned in order of first appearance in time. Labels already present in
/// `dict` keep their ids.
EventLog load_events(const std::filesystem::path& path, EventFormat format,
                     std::shared_ptr<NodeDictionary> dict = nullptr);

EventLog parse_events(std::string_view text, EventFormat format,
                      std::shared_ptr<NodeDictionary> dict = nullptr);

/// Builds a log from already-numbered events (generator output, tests).
EventLog make_log(std::vector<Event> events, NodeId n_nodes = -1,
                  std::optional<std::pair<double, double>> horizon = std::nullopt);

void write_events(const EventLog& log, const std::filesystem::path& path,
                  EventFormat format = EventFormat::csv);
std::string format_events(const EventLog& log, EventFormat format = EventFormat::csv);

/// Edge list "u,v" per line; labels are interned into `dict`.
Adjacency load_adjacency(const std::filesystem::path& path, NodeDictionary& dict);
Adjacency parse_adjacency(std::string_view text, NodeDictionary& dict);
void write_adjacency(const Adjacency& adj, const NodeDictionary* dict,
                     const std::filesystem::path& path);

SlotSplit split_slots(const EventLog& log, double train_fraction, int n_slots);

/// Fills l with the association status of (u, v) just before each event.
/// Counts disagreements with file-provided values in `mismatches` (replay wins).
EventLog derive_link_status(const EventLog& log, const Adjacency& a0,
                            std::size_t* mismatches = nullptr);

/// Rejects association events on pairs that are already associated.
void check_association_replay(const EventLog& log, const Adjacency& a0);

/// Largest node id referenced by `log` or `a0`, plus one.
NodeId node_extent(const EventLog& log, const Adjacency& a0);

} // namespace dyrep
