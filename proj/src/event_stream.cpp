#include <dyrep/event_stream.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

namespace dyrep {
namespace {

struct RawRecord {
    std::string u;
    std::string v;
    double t = 0.0;
    EventType k = EventType::communication;
    std::optional<std::uint8_t> l;
    std::size_t line = 0;
};

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

[[noreturn]] void fail(std::size_t line, const std::string& what)
{
    throw DataError("line " + std::to_string(line) + ": " + what);
}

double parse_time(std::string_view s, std::size_t line)
{
    double t = 0.0;
    const auto end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, t);
    if (ec != std::errc{} || ptr != end || !std::isfinite(t)) fail(line, "malformed timestamp '" + std::string(s) + "'");
    return t;
}

int parse_flag(std::string_view s, std::size_t line, const char* name)
{
    int value = -1;
    const auto end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end) fail(line, std::string("malformed ") + name + " '" + std::string(s) + "'");
    return value;
}

void validate(RawRecord& rec, int k, std::optional<int> l)
{
    if (rec.u.empty() || rec.v.empty()) fail(rec.line, "missing node id");
    if (rec.u == rec.v) fail(rec.line, "self-event on node " + rec.u);
    if (rec.t < 0.0) fail(rec.line, "negative timestamp");
    if (k != 0 && k != 1) fail(rec.line, "unknown event type k=" + std::to_string(k));
    rec.k = event_type_from_index(k);
    if (l) {
        if (*l != 0 && *l != 1) fail(rec.line, "link status must be 0 or 1");
        rec.l = static_cast<std::uint8_t>(*l);
    }
}

std::vector<RawRecord> parse_csv(std::string_view text)
{
    std::vector<RawRecord> records;
    // column positions for u, v, t, k, l (l optional).
    std::array<int, 5> col{0, 1, 2, 3, 4};
    bool first = true;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        auto fields = split_commas(line);
        if (first) {
            first = false;
            if (fields.front() == "u" || fields.front() == "v" || fields.front() == "t") {
                col = {-1, -1, -1, -1, -1};
                constexpr std::array<std::string_view, 5> names{"u", "v", "t", "k", "l"};
                for (std::size_t i = 0; i < fields.size(); ++i) {
                    const auto it = std::find(names.begin(), names.end(), fields[i]);
                    if (it == names.end()) fail(line_no, "unknown column '" + std::string(fields[i]) + "'");
                    col[static_cast<std::size_t>(it - names.begin())] = static_cast<int>(i);
                }
                if (col[0] < 0 || col[1] < 0 || col[2] < 0 || col[3] < 0) fail(line_no, "header must name u,v,t,k");
                continue;
            }
        }
        const auto need = static_cast<std::size_t>(std::max({col[0], col[1], col[2], col[3]}) + 1);
        if (fields.size() < need || fields.size() > 5) fail(line_no, "malformed record '" + std::string(line) + "'");
        RawRecord rec;
        rec.line = line_no;
        rec.u = std::string(fields[static_cast<std::size_t>(col[0])]);
        rec.v = std::string(fields[static_cast<std::size_t>(col[1])]);
        rec.t = parse_time(fields[static_cast<std::size_t>(col[2])], line_no);
        const int k = parse_flag(fields[static_cast<std::size_t>(col[3])], line_no, "k");
        std::optional<int> l;
        if (col[4] >= 0 && static_cast<std::size_t>(col[4]) < fields.size() && !fields[static_cast<std::size_t>(col[4])].empty())
            l = parse_flag(fields[static_cast<std::size_t>(col[4])], line_no, "l");
        validate(rec, k, l);
        records.push_back(std::move(rec));
    }
    return records;
}

std::string json_label(const nlohmann::json& j, std::size_t line, const char* key)
{
    const auto it = j.find(key);
    if (it == j.end()) fail(line, std::string("missing field '") + key + "'");
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) {
        const auto id = it->get<std::int64_t>();
        if (id < 0) fail(line, "negative node id");
        return std::to_string(id);
    }
    fail(line, std::string("field '") + key + "' must be an integer or string");
}

std::vector<RawRecord> parse_jsonl(std::string_view text)
{
    std::vector<RawRecord> records;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            fail(line_no, "malformed JSON record");
        }
        if (!j.is_object()) fail(line_no, "record must be an object");
        RawRecord rec;
        rec.line = line_no;
        rec.u = json_label(j, line_no, "u");
        rec.v = json_label(j, line_no, "v");
        if (!j.contains("t") || !j["t"].is_number()) fail(line_no, "missing or non-numeric 't'");
        rec.t = j["t"].get<double>();
        if (!j.contains("k") || !j["k"].is_number_integer()) fail(line_no, "missing or non-integer 'k'");
        std::optional<int> l;
        if (j.contains("l") && !j["l"].is_null()) {
            if (!j["l"].is_number_integer()) fail(line_no, "non-integer 'l'");
            l = j["l"].get<int>();
        }
        validate(rec, j["k"].get<int>(), l);
        records.push_back(std::move(rec));
    }
    return records;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string format_time(double t)
{
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), t);
    return std::string(buf.data(), ptr);
}

std::uint64_t pair_key(NodeId a, NodeId b)
{
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

} // namespace

NodeId NodeDictionary::intern(std::string_view label)
{
    const std::string key(label);
    const auto it = ids_.find(key);
    if (it != ids_.end()) return it->second;
    const auto id = static_cast<NodeId>(labels_.size());
    ids_.emplace(key, id);
    labels_.push_back(key);
    return id;
}

std::optional<NodeId> NodeDictionary::find(std::string_view label) const
{
    const auto it = ids_.find(std::string(label));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

std::string EventLog::label(NodeId id) const
{
    if (dictionary && id < dictionary->size()) return dictionary->label(id);
    return std::to_string(id);
}

void Adjacency::add(NodeId a, NodeId b)
{
    if (a == b) throw DataError("self-loop in adjacency");
    if (a > b) std::swap(a, b);
    edges.emplace_back(a, b);
    n = std::max(n, b + 1);
}

void Adjacency::normalize()
{
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

EventLog SlotSplit::test() const
{
    EventLog out;
    out.n_nodes = train.n_nodes;
    out.dictionary = train.dictionary;
    out.link_status_given = train.link_status_given;
    for (const auto& slot : test_slots) {
        out.events.insert(out.events.end(), slot.events.begin(), slot.events.end());
        out.n_nodes = std::max(out.n_nodes, slot.n_nodes);
    }
    if (!test_slots.empty()) out.horizon = {test_slots.front().horizon.first, test_slots.back().horizon.second};
    return out;
}

EventFormat format_from_path(const std::filesystem::path& path)
{
    const auto ext = path.extension().string();
    if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return EventFormat::jsonl;
    return EventFormat::csv;
}

EventLog parse_events(std::string_view text, EventFormat format, std::shared_ptr<NodeDictionary> dict)
{
    auto records = format == EventFormat::csv ? parse_csv(text) : parse_jsonl(text);
    std::stable_sort(records.begin(), records.end(),
                     [](const RawRecord& a, const RawRecord& b) { return a.t < b.t; });
    if (!dict) dict = std::make_shared<NodeDictionary>();

    EventLog log;
    log.events.reserve(records.size());
    log.link_status_given = !records.empty();
    for (const auto& rec : records) {
        Event e;
        e.u = dict->intern(rec.u);
        e.v = dict->intern(rec.v);
        e.t = rec.t;
        e.k = rec.k;
        e.l = rec.l.value_or(0);
        log.link_status_given = log.link_status_given && rec.l.has_value();
        log.events.push_back(e);
    }
    log.n_nodes = dict->size();
    log.horizon = {0.0, log.events.empty() ? 0.0 : log.events.back().t};
    log.dictionary = std::move(dict);
    return log;
}

EventLog load_events(const std::filesystem::path& path, EventFormat format, std::shared_ptr<NodeDictionary> dict)
{
    try {
        return parse_events(read_file(path), format, std::move(dict));
    } catch (const DataError& err) {
        throw DataError(path.string() + ": " + err.what());
    }
}

EventLog make_log(std::vector<Event> events, NodeId n_nodes, std::optional<std::pair<double, double>> horizon)
{
    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    NodeId extent = 0;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.u < 0 || e.v < 0) throw DataError("event " + std::to_string(i) + ": negative node id");
        if (e.u == e.v) throw DataError("event " + std::to_string(i) + ": self-event");
        if (e.t < 0.0 || !std::isfinite(e.t)) throw DataError("event " + std::to_string(i) + ": bad timestamp");
        if (e.l > 1) throw DataError("event " + std::to_string(i) + ": link status must be 0 or 1");
        extent = std::max({extent, e.u + 1, e.v + 1});
    }
    EventLog log;
    log.n_nodes = n_nodes < 0 ? extent : n_nodes;
    if (extent > log.n_nodes) throw DataError("node id exceeds n_nodes");
    log.horizon = horizon.value_or(std::pair{0.0, events.empty() ? 0.0 : events.back().t});
    log.events = std::move(events);
    return log;
}

std::string format_events(const EventLog& log, EventFormat format)
{
    std::ostringstream out;
    if (format == EventFormat::csv) {
        out << "u,v,t,k,l\n";
        for (const auto& e : log.events)
            out << log.label(e.u) << ',' << log.label(e.v) << ',' << format_time(e.t) << ','
                << to_index(e.k) << ',' << static_cast<int>(e.l) << '\n';
    } else {
        for (const auto& e : log.events) {
            nlohmann::json j;
            j["u"] = log.label(e.u);
            j["v"] = log.label(e.v);
            j["t"] = e.t;
            j["k"] = to_index(e.k);
            j["l"] = static_cast<int>(e.l);
            out << j.dump() << '\n';
        }
    }
    return out.str();
}

void write_events(const EventLog& log, const std::filesystem::path& path, EventFormat format)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << format_events(log, format);
}

Adjacency parse_adjacency(std::string_view text, NodeDictionary& dict)
{
    Adjacency adj;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto fields = split_commas(line);
        if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
            fail(line_no, "adjacency record must be 'u,v'");
        if (line_no == 1 && fields[0] == "u" && fields[1] == "v") continue;
        if (fields[0] == fields[1]) fail(line_no, "self-loop in adjacency");
        adj.add(dict.intern(fields[0]), dict.intern(fields[1]));
    }
    adj.n = std::max(adj.n, dict.size());
    adj.normalize();
    return adj;
}

Adjacency load_adjacency(const std::filesystem::path& path, NodeDictionary& dict)
{
    try {
        return parse_adjacency(read_file(path), dict);
    } catch (const DataError& err) {
        throw DataError(path.string() + ": " + err.what());
    }
}

void write_adjacency(const Adjacency& adj, const NodeDictionary* dict, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    const auto name = [&](NodeId id) {
        return dict && id < dict->size() ? dict->label(id) : std::to_string(id);
    };
    for (const auto& [a, b] : adj.edges) out << name(a) << ',' << name(b) << '\n';
}

SlotSplit split_slots(const EventLog& log, double train_fraction, int n_slots)
{
    if (log.empty()) throw DataError("cannot split an empty log");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
    if (n_slots < 1) throw ConfigError("n_slots must be positive");

    const auto p = log.events.size();
    const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(p)));
    if (n_train >= p) throw DataError("empty test window");

    const double last_train = n_train > 0 ? log.events[n_train - 1].t : log.horizon.first;
    const double boundary = 0.5 * (last_train + log.events[n_train].t);
    const double end = std::max(log.horizon.second, log.events.back().t);
    const double width = (end - boundary) / n_slots;

    SlotSplit split;
    split.train.events.assign(log.events.begin(), log.events.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.train.n_nodes = log.n_nodes;
    split.train.horizon = {log.horizon.first, boundary};
    split.train.dictionary = log.dictionary;
    split.train.link_status_given = log.link_status_given;

    split.test_slots.resize(static_cast<std::size_t>(n_slots));
    for (int s = 0; s < n_slots; ++s) {
        auto& slot = split.test_slots[static_cast<std::size_t>(s)];
        slot.n_nodes = log.n_nodes;
        slot.dictionary = log.dictionary;
        slot.link_status_given = log.link_status_given;
        slot.horizon = {boundary + s * width, s + 1 == n_slots ? end : boundary + (s + 1) * width};
    }
    for (std::size_t i = n_train; i < p; ++i) {
        const auto& e = log.events[i];
        int s = width > 0.0 ? static_cast<int>((e.t - boundary) / width) : 0;
        s = std::clamp(s, 0, n_slots - 1);
        // floating rounding at the boundaries
        while (s > 0 && e.t < split.test_slots[static_cast<std::size_t>(s)].horizon.first) --s;
        while (s + 1 < n_slots && e.t >= split.test_slots[static_cast<std::size_t>(s + 1)].horizon.first) ++s;
        split.test_slots[static_cast<std::size_t>(s)].events.push_back(e);
    }
    for (std::size_t s = 0; s < split.test_slots.size(); ++s)
        if (split.test_slots[s].empty()) split.empty_slots.push_back(s);
    return split;
}

EventLog derive_link_status(const EventLog& log, const Adjacency& a0, std::size_t* mismatches)
{
    std::unordered_set<std::uint64_t> linked;
    linked.reserve(a0.edges.size() * 2 + 16);
    for (const auto& [a, b] : a0.edges) linked.insert(pair_key(a, b));

    EventLog out = log;
    std::size_t bad = 0;
    for (auto& e : out.events) {
        const auto key = pair_key(e.u, e.v);
        const std::uint8_t status = linked.count(key) ? 1 : 0;
        if (log.link_status_given && e.l != status) ++bad;
        e.l = status;
        if (e.k == EventType::association) linked.insert(key);
    }
    out.link_status_given = true;
    if (mismatches) *mismatches = bad;
    return out;
}

void check_association_replay(const EventLog& log, const Adjacency& a0)
{
    std::unordered_set<std::uint64_t> linked;
    for (const auto& [a, b] : a0.edges) linked.insert(pair_key(a, b));
    for (std::size_t i = 0; i < log.events.size(); ++i) {
        const auto& e = log.events[i];
        if (e.k != EventType::association) continue;
        if (!linked.insert(pair_key(e.u, e.v)).second)
            throw DataError("event " + std::to_string(i) + ": association on already-associated pair (" +
                            log.label(e.u) + ", " + log.label(e.v) + ")");
    }
}

NodeId node_extent(const EventLog& log, const Adjacency& a0)
{
    NodeId n = a0.n;
    for (const auto& [a, b] : a0.edges) n = std::max(n, b + 1);
    for (const auto& e : log.events) n = std::max({n, e.u + 1, e.v + 1});
    return n;
}

} // namespace dyrep
