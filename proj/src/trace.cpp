// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvtier/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "json.hpp"

namespace kvtier {

std::string_view to_string(WorkloadFamily f) {
    switch (f) {
        case WorkloadFamily::sharegpt_like: return "sharegpt_like";
        case WorkloadFamily::lmsys_like: return "lmsys_like";
        case WorkloadFamily::agentic: return "agentic";
    }
    return "?";
}

WorkloadFamily parse_workload_family(std::string_view s) {
    if (s == "sharegpt_like" || s == "sharegpt") return WorkloadFamily::sharegpt_like;
    if (s == "lmsys_like" || s == "lmsys") return WorkloadFamily::lmsys_like;
    if (s == "agentic") return WorkloadFamily::agentic;
    throw ParseEnumError("unknown workload family '" + std::string(s) + "'");
}

WorkloadSpec WorkloadSpec::defaults(WorkloadFamily family, std::uint32_t num_sessions, std::uint64_t seed) {
    WorkloadSpec s;
    s.family = family;
    s.num_sessions = num_sessions;
    s.seed = seed;
    switch (family) {
        case WorkloadFamily::sharegpt_like:
            s.mean_input_tokens = 500;
            s.mean_output_tokens = 300;
            s.shared_prompt_fraction = 0.3;
            s.prompt_pool_size = 8;
            s.mean_system_prompt_tokens = 400;
            s.mean_turns = 3.0;
            break;
        case WorkloadFamily::lmsys_like:
            break;
        case WorkloadFamily::agentic:
            s.mean_input_tokens = 300;
            s.mean_output_tokens = 200;
            s.shared_prompt_fraction = 0.9;
            s.prompt_pool_size = 8;
            s.mean_turns = 1.0;
            break;
    }
    return s;
}

void validate(const WorkloadSpec& s) {
    auto fail = [](const std::string& what) { throw std::invalid_argument("invalid workload spec: " + what); };
    if (s.block_tokens == 0) fail("block_tokens must be positive");
    if (s.bytes_per_token == 0) fail("bytes_per_token must be positive");
    if (!(s.mean_input_tokens >= 1) || !(s.mean_output_tokens >= 1)) fail("mean lengths must be >= 1");
    if (!(s.length_sigma >= 0 && s.length_sigma <= 3)) fail("length_sigma must lie in [0, 3]");
    if (!(s.shared_prompt_fraction >= 0 && s.shared_prompt_fraction <= 1)) fail("shared_prompt_fraction must lie in [0, 1]");
    if (s.prompt_pool_size == 0) fail("prompt_pool_size must be positive");
    if (!(s.mean_system_prompt_tokens >= 1)) fail("mean_system_prompt_tokens must be >= 1");
    if (!(s.prompt_length_sigma >= 0 && s.prompt_length_sigma <= 3)) fail("prompt_length_sigma must lie in [0, 3]");
    if (!(s.mean_turns >= 1)) fail("mean_turns must be >= 1");
    if (!(s.reasoning_fraction >= 0 && s.reasoning_fraction <= 1)) fail("reasoning_fraction must lie in [0, 1]");
    if (!(s.session_arrival_rate_per_s > 0)) fail("session_arrival_rate_per_s must be positive");
    if (!(s.mean_think_time_s >= 0) || !(s.token_time_ms >= 0) || !(s.prefill_block_time_ms >= 0))
        fail("times must be non-negative");
    if (s.num_tools == 0) fail("num_tools must be positive");
    if (s.min_tool_calls == 0 || s.min_tool_calls > s.max_tool_calls) fail("need 1 <= min_tool_calls <= max_tool_calls");
    if (s.tool_context_tokens == 0) fail("tool_context_tokens must be positive");
    if (!(s.mean_tool_result_tokens >= 1)) fail("mean_tool_result_tokens must be >= 1");
    if (s.min_reasoning_blocks > s.max_reasoning_blocks) fail("min_reasoning_blocks exceeds max_reasoning_blocks");
    if (!(s.tool_transition_skew >= 0 && s.tool_transition_skew <= 1)) fail("tool_transition_skew must lie in [0, 1]");
}

// --- Rng ------------------------------------------------------------------------

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_int(std::uint64_t lo, std::uint64_t hi) {
    if (hi < lo) throw std::invalid_argument("uniform_int range is empty");
    const std::uint64_t span = hi - lo + 1;
    if (span == 0) return engine_();
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return lo + x % span;
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::lognormal_with_mean(double mean, double sigma) {
    const double mu = std::log(mean) - 0.5 * sigma * sigma;
    return std::exp(mu + sigma * normal());
}

double Rng::exponential(double mean) {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return -mean * std::log(u);
}

// --- Generator ------------------------------------------------------------------

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

SimTime from_ms(double ms) { return SimTime(static_cast<std::int64_t>(std::llround(ms * 1e6))); }

struct SharedBlock {
    BlockId id = 0;
    std::uint64_t tokens = 0;
};

/// Splits a token count into block-sized pieces.
std::vector<std::uint64_t> chunk(std::uint64_t tokens, std::uint32_t block_tokens) {
    std::vector<std::uint64_t> out;
    while (tokens > 0) {
        const std::uint64_t n = std::min<std::uint64_t>(tokens, block_tokens);
        out.push_back(n);
        tokens -= n;
    }
    return out;
}

std::uint64_t draw_tokens(Rng& rng, double mean, double sigma) {
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(rng.lognormal_with_mean(mean, sigma))));
}

struct Carried {
    BlockId id;
    BlockType type;
    TokenSpan span;
    std::uint64_t size;
};

class SessionWriter {
public:
    SessionWriter(std::string sid, SimTime start, const WorkloadSpec& spec, BlockId& next_id,
                  std::vector<AccessEvent>& out)
        : sid_(std::move(sid)), now_(start), spec_(spec), next_id_(next_id), out_(out) {}

    SimTime now() const { return now_; }
    void wait(SimTime dt) { now_ += std::max(dt, SimTime(1)); }
    std::uint64_t cursor() const { return cursor_; }

    void marker(EventKind kind, std::optional<TokenSpan> span, std::optional<std::string> tool = std::nullopt) {
        AccessEvent e;
        e.time = now_;
        e.session_id = sid_;
        e.kind = kind;
        e.position = cursor_;
        e.token_span = span;
        e.tool_name = std::move(tool);
        push(std::move(e));
    }

    void access(BlockId id, BlockType type, TransitionType tr, TokenSpan span, std::uint64_t size) {
        AccessEvent e;
        e.time = now_;
        e.session_id = sid_;
        e.block_id = id;
        e.block_type = type;
        e.transition_type = tr;
        e.position = cursor_;
        e.kind = EventKind::block_access;
        e.size_bytes = size;
        e.content_seed = splitmix(id);
        e.token_span = span;
        push(std::move(e));
    }

    /// Appends shared blocks at the current cursor.
    std::vector<Carried> shared(const std::vector<SharedBlock>& blocks, BlockType type, TransitionType tr,
                                SimTime step) {
        std::vector<Carried> out;
        for (const auto& b : blocks) {
            TokenSpan span{cursor_, cursor_ + b.tokens};
            cursor_ = span.end;
            const std::uint64_t size = b.tokens * spec_.bytes_per_token;
            access(b.id, type, tr, span, size);
            out.push_back({b.id, type, span, size});
            wait(step);
        }
        return out;
    }

    /// Creates fresh blocks covering `tokens`; `type_of(i)` types the i-th block.
    template <typename TypeFn>
    std::vector<Carried> fresh(std::uint64_t tokens, TypeFn type_of, TransitionType tr, double ms_per_token,
                               double ms_per_block) {
        std::vector<Carried> out;
        std::size_t i = 0;
        for (std::uint64_t n : chunk(tokens, spec_.block_tokens)) {
            wait(from_ms(ms_per_token * static_cast<double>(n) + ms_per_block));
            TokenSpan span{cursor_, cursor_ + n};
            cursor_ = span.end;
            const BlockId id = next_id_++;
            const BlockType type = type_of(i++);
            const std::uint64_t size = n * spec_.bytes_per_token;
            access(id, type, tr, span, size);
            out.push_back({id, type, span, size});
        }
        return out;
    }

    void revisit(const std::vector<Carried>& blocks, TransitionType tr, SimTime step) {
        for (const auto& b : blocks) {
            access(b.id, b.type, tr, b.span, b.size);
            wait(step);
        }
    }

private:
    void push(AccessEvent e) {
        e.sequence = order_++;
        out_.push_back(std::move(e));
    }

    std::string sid_;
    SimTime now_;
    const WorkloadSpec& spec_;
    BlockId& next_id_;
    std::vector<AccessEvent>& out_;
    std::uint64_t cursor_ = 0;
    std::uint64_t order_ = 0;
};

std::string session_name(std::uint32_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%07u", i);
    return buf;
}

std::string tool_name(std::uint32_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "tool_%02u", i);
    return buf;
}

/// Pool index with weights proportional to 1 / (i + 1).
std::uint32_t zipf_pick(Rng& rng, std::uint32_t n) {
    double total = 0;
    for (std::uint32_t i = 0; i < n; ++i) total += 1.0 / (i + 1);
    double u = rng.uniform() * total;
    for (std::uint32_t i = 0; i < n; ++i) {
        u -= 1.0 / (i + 1);
        if (u < 0) return i;
    }
    return n - 1;
}

std::vector<SharedBlock> make_shared(BlockId& next_id, std::uint64_t tokens, std::uint32_t block_tokens) {
    std::vector<SharedBlock> out;
    for (std::uint64_t n : chunk(tokens, block_tokens)) out.push_back({next_id++, n});
    return out;
}

void chat_session(const WorkloadSpec& spec, Rng& rng, SessionWriter& w,
                  const std::vector<std::vector<SharedBlock>>& pool, BlockId& next_id) {
    const SimTime step = from_ms(spec.prefill_block_time_ms);
    std::vector<SharedBlock> sys;
    if (rng.bernoulli(spec.shared_prompt_fraction))
        sys = pool[zipf_pick(rng, spec.prompt_pool_size)];
    else
        sys = make_shared(next_id, draw_tokens(rng, spec.mean_system_prompt_tokens, spec.prompt_length_sigma),
                          spec.block_tokens);
    std::uint32_t turns = 1;
    const double p_more = 1.0 - 1.0 / spec.mean_turns;
    while (rng.bernoulli(p_more)) ++turns;

    std::vector<Carried> sys_blocks, history;
    for (std::uint32_t turn = 0; turn < turns; ++turn) {
        const std::uint64_t input = draw_tokens(rng, spec.mean_input_tokens, spec.length_sigma);
        const std::uint64_t output = draw_tokens(rng, spec.mean_output_tokens, spec.length_sigma);
        std::uint64_t sys_tokens = 0;
        for (const auto& s : sys) sys_tokens += s.tokens;
        const std::uint64_t in_start = turn == 0 ? sys_tokens : w.cursor();
        w.marker(EventKind::request_start, TokenSpan{in_start, in_start + input});
        if (turn == 0) {
            sys_blocks = w.shared(sys, BlockType::system_prompt, TransitionType::agent_handoff, step);
        } else {
            w.revisit(sys_blocks, TransitionType::reasoning_step, step);
            w.revisit(history, TransitionType::reasoning_step, step);
        }
        auto in_blocks = w.fresh(input, [](std::size_t) { return BlockType::user_context; },
                                 TransitionType::reasoning_step, 0.0, spec.prefill_block_time_ms);
        history.insert(history.end(), in_blocks.begin(), in_blocks.end());

        const std::uint64_t out_start = w.cursor();
        std::vector<BlockType> types;
        for (std::size_t i = 0; i < chunk(output, spec.block_tokens).size(); ++i)
            types.push_back(rng.bernoulli(spec.reasoning_fraction) ? BlockType::intermediate_reasoning
                                                                   : BlockType::user_context);
        auto out_blocks = w.fresh(output, [&](std::size_t i) { return types[i]; },
                                  TransitionType::reasoning_step, spec.token_time_ms, 0.0);
        for (const auto& b : out_blocks) {
            if (b.type == BlockType::user_context) history.push_back(b);
        }
        w.marker(EventKind::request_end, TokenSpan{out_start, w.cursor()});
        if (turn + 1 < turns) w.wait(from_ms(1000.0 * rng.exponential(spec.mean_think_time_s)));
    }
}

struct ToolModel {
    std::vector<std::vector<SharedBlock>> defs;
    std::vector<std::uint32_t> preferred;
};

void agentic_session(const WorkloadSpec& spec, Rng& rng, SessionWriter& w,
                     const std::vector<std::vector<SharedBlock>>& pool, const ToolModel& tools,
                     BlockId& next_id) {
    const SimTime step = from_ms(spec.prefill_block_time_ms);
    std::vector<SharedBlock> sys;
    if (rng.bernoulli(spec.shared_prompt_fraction))
        sys = pool[zipf_pick(rng, spec.prompt_pool_size)];
    else
        sys = make_shared(next_id, draw_tokens(rng, spec.mean_system_prompt_tokens, spec.prompt_length_sigma),
                          spec.block_tokens);
    std::uint64_t sys_tokens = 0;
    for (const auto& s : sys) sys_tokens += s.tokens;

    const std::uint64_t input = draw_tokens(rng, spec.mean_input_tokens, spec.length_sigma);
    w.marker(EventKind::request_start, TokenSpan{sys_tokens, sys_tokens + input});
    auto sys_blocks = w.shared(sys, BlockType::system_prompt, TransitionType::agent_handoff, step);
    auto history = w.fresh(input, [](std::size_t) { return BlockType::user_context; },
                           TransitionType::reasoning_step, 0.0, spec.prefill_block_time_ms);

    const auto calls = static_cast<std::uint32_t>(rng.uniform_int(spec.min_tool_calls, spec.max_tool_calls));
    auto tool = static_cast<std::uint32_t>(rng.uniform_int(0, spec.num_tools - 1));
    std::optional<std::uint32_t> prev;
    std::vector<Carried> tool_defs_seen;
    for (std::uint32_t c = 0; c < calls; ++c) {
        const TransitionType tr = prev && *prev == tool ? TransitionType::same_tool_repeat : TransitionType::tool_switch;
        w.marker(EventKind::tool_call, std::nullopt, tool_name(tool));
        w.shared(tools.defs[tool], BlockType::tool_context, tr, step);
        const std::uint64_t result = draw_tokens(rng, spec.mean_tool_result_tokens, spec.length_sigma);
        auto res = w.fresh(result, [](std::size_t) { return BlockType::tool_context; }, tr, 0.0,
                           spec.prefill_block_time_ms);

        w.revisit(sys_blocks, TransitionType::reasoning_step, step);
        w.revisit(history, TransitionType::reasoning_step, step);
        history.insert(history.end(), res.begin(), res.end());
        const auto r = rng.uniform_int(spec.min_reasoning_blocks, spec.max_reasoning_blocks);
        w.fresh(r * spec.block_tokens, [](std::size_t) { return BlockType::intermediate_reasoning; },
                TransitionType::reasoning_step, spec.token_time_ms, 0.0);

        prev = tool;
        if (rng.bernoulli(spec.tool_transition_skew))
            tool = tools.preferred[tool];
        else
            tool = static_cast<std::uint32_t>(rng.uniform_int(0, spec.num_tools - 1));
    }
    const std::uint64_t out_start = w.cursor();
    const std::uint64_t output = draw_tokens(rng, spec.mean_output_tokens, spec.length_sigma);
    w.fresh(output, [](std::size_t) { return BlockType::user_context; }, TransitionType::reasoning_step,
            spec.token_time_ms, 0.0);
    w.marker(EventKind::request_end, TokenSpan{out_start, w.cursor()});
}

}  // namespace

std::vector<AccessEvent> generate(const WorkloadSpec& spec) {
    validate(spec);
    std::vector<AccessEvent> events;
    if (spec.num_sessions == 0) return events;
    Rng rng(spec.seed);
    BlockId next_id = 1;

    std::vector<std::vector<SharedBlock>> pool;
    for (std::uint32_t p = 0; p < spec.prompt_pool_size; ++p)
        pool.push_back(make_shared(next_id, draw_tokens(rng, spec.mean_system_prompt_tokens, spec.prompt_length_sigma),
                                   spec.block_tokens));
    ToolModel tools;
    if (spec.family == WorkloadFamily::agentic) {
        for (std::uint32_t t = 0; t < spec.num_tools; ++t) {
            tools.defs.push_back(make_shared(next_id, spec.tool_context_tokens, spec.block_tokens));
            tools.preferred.push_back(static_cast<std::uint32_t>(rng.uniform_int(0, spec.num_tools - 1)));
        }
    }

    SimTime arrival{0};
    for (std::uint32_t s = 0; s < spec.num_sessions; ++s) {
        arrival += from_ms(1000.0 * rng.exponential(1.0 / spec.session_arrival_rate_per_s));
        SessionWriter w(session_name(s), arrival, spec, next_id, events);
        if (spec.family == WorkloadFamily::agentic)
            agentic_session(spec, rng, w, pool, tools, next_id);
        else
            chat_session(spec, rng, w, pool, next_id);
    }
    std::stable_sort(events.begin(), events.end(), [](const AccessEvent& a, const AccessEvent& b) {
        return std::tie(a.time, a.session_id, a.sequence) < std::tie(b.time, b.session_id, b.sequence);
    });
    for (std::size_t i = 0; i < events.size(); ++i) events[i].sequence = i;
    return events;
}

// --- JSONL ----------------------------------------------------------------------

TraceParseError::TraceParseError(std::size_t line, const std::string& reason)
    : std::runtime_error("trace line " + std::to_string(line) + ": " + reason), line_(line) {}

namespace {

constexpr std::string_view kBlockMapping =
    "system prompt -> system_prompt; tool schema and results -> tool_context; "
    "turns -> user_context; single-use generation -> intermediate_reasoning";

std::string header_line() {
    nlohmann::ordered_json h;
    h["format"] = "kvtier-trace";
    h["version"] = kTraceFormatVersion;
    h["block_mapping"] = kBlockMapping;
    return h.dump();
}

std::string event_line(const AccessEvent& e) {
    nlohmann::ordered_json j;
    j["session_id"] = e.session_id;
    j["time_ns"] = e.time.count();
    j["kind"] = to_string(e.kind);
    j["block_id"] = e.block_id;
    j["block_type"] = to_string(e.block_type);
    j["transition_type"] = to_string(e.transition_type);
    j["position"] = e.position;
    j["size_bytes"] = e.size_bytes;
    if (e.tool_name) j["tool_name"] = *e.tool_name;
    if (e.content_seed) j["content_seed"] = *e.content_seed;
    if (e.token_span) {
        j["token_start"] = e.token_span->start;
        j["token_end"] = e.token_span->end;
    }
    return j.dump();
}

template <typename T>
T field(const nlohmann::json& j, const char* name, std::size_t line) {
    auto it = j.find(name);
    if (it == j.end()) throw TraceParseError(line, std::string("missing field '") + name + "'");
    try {
        if constexpr (std::is_same_v<T, std::string>) {
            if (!it->is_string()) throw TraceParseError(line, std::string("field '") + name + "' must be a string");
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!it->is_number_unsigned())
                throw TraceParseError(line, std::string("field '") + name + "' must be a non-negative integer");
        } else {
            if (!it->is_number_integer()) throw TraceParseError(line, std::string("field '") + name + "' must be an integer");
        }
        return it->get<T>();
    } catch (const nlohmann::json::exception& ex) {
        throw TraceParseError(line, std::string("field '") + name + "': " + ex.what());
    }
}

template <typename T, typename Fn>
T enum_field(const nlohmann::json& j, const char* name, std::size_t line, Fn parse_fn) {
    const auto s = field<std::string>(j, name, line);
    try {
        return parse_fn(s);
    } catch (const ParseEnumError& ex) {
        throw TraceParseError(line, std::string("field '") + name + "': " + ex.what());
    }
}

AccessEvent parse_record(const nlohmann::json& j, std::size_t line) {
    AccessEvent e;
    e.session_id = field<std::string>(j, "session_id", line);
    const auto t = field<std::int64_t>(j, "time_ns", line);
    if (t < 0) throw TraceParseError(line, "field 'time_ns' must be non-negative");
    e.time = SimTime(t);
    e.kind = enum_field<EventKind>(j, "kind", line, parse_event_kind);
    const bool block = e.kind == EventKind::block_access;
    if (block || j.contains("block_id")) e.block_id = field<std::uint64_t>(j, "block_id", line);
    if (block || j.contains("block_type"))
        e.block_type = enum_field<BlockType>(j, "block_type", line, parse_block_type);
    if (block || j.contains("transition_type"))
        e.transition_type = enum_field<TransitionType>(j, "transition_type", line, parse_transition_type);
    if (block || j.contains("position")) e.position = field<std::uint64_t>(j, "position", line);
    if (block || j.contains("size_bytes")) e.size_bytes = field<std::uint64_t>(j, "size_bytes", line);
    if (block && e.size_bytes == 0) throw TraceParseError(line, "field 'size_bytes' must be positive");
    if (j.contains("tool_name") && !j["tool_name"].is_null()) e.tool_name = field<std::string>(j, "tool_name", line);
    if (e.kind == EventKind::tool_call && !e.tool_name)
        throw TraceParseError(line, "missing field 'tool_name' on tool_call");
    if (j.contains("content_seed") && !j["content_seed"].is_null())
        e.content_seed = field<std::uint64_t>(j, "content_seed", line);
    const bool has_start = j.contains("token_start"), has_end = j.contains("token_end");
    if (has_start != has_end) throw TraceParseError(line, "token_start and token_end must appear together");
    if (has_start) {
        TokenSpan span{field<std::uint64_t>(j, "token_start", line), field<std::uint64_t>(j, "token_end", line)};
        if (span.start >= span.end) throw TraceParseError(line, "token_start must be below token_end");
        e.token_span = span;
    }
    return e;
}

}  // namespace

void emit(const std::vector<AccessEvent>& events, std::ostream& out) {
    out << header_line() << '\n';
    for (const auto& e : events) out << event_line(e) << '\n';
}

void emit(const std::vector<AccessEvent>& events, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    emit(events, out);
    if (!out) throw std::runtime_error("failed writing " + path);
}

std::string emit_string(const std::vector<AccessEvent>& events) {
    std::ostringstream out;
    emit(events, out);
    return out.str();
}

std::vector<AccessEvent> parse(std::istream& in) {
    std::vector<AccessEvent> events;
    std::string text;
    std::size_t line_no = 0;
    while (std::getline(in, text)) {
        ++line_no;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        if (text.find_first_not_of(" \t") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& ex) {
            throw TraceParseError(line_no, std::string("malformed JSON: ") + ex.what());
        }
        if (!j.is_object()) throw TraceParseError(line_no, "record must be a JSON object");
        if (j.contains("format")) {
            if (j["format"] != "kvtier-trace") throw TraceParseError(line_no, "unknown trace format");
            if (!j.contains("version") || j["version"] != kTraceFormatVersion)
                throw TraceParseError(line_no, "unsupported trace version");
            continue;
        }
        AccessEvent e = parse_record(j, line_no);
        e.sequence = events.size();
        events.push_back(std::move(e));
    }
    return events;
}

std::vector<AccessEvent> parse(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open trace " + path);
    return parse(in);
}

std::vector<AccessEvent> parse_string(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse(in);
}

void validate_stream(const std::vector<AccessEvent>& events) {
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (i > 0) {
            const auto& p = events[i - 1];
            if (std::tie(e.time, e.sequence) <= std::tie(p.time, p.sequence))
                throw TraceParseError(i + 1, "events out of (time, sequence) order");
        }
        if (e.kind == EventKind::block_access && e.size_bytes == 0)
            throw TraceParseError(i + 1, "block_access with zero size_bytes");
        if (e.kind == EventKind::tool_call && !e.tool_name) throw TraceParseError(i + 1, "tool_call without tool_name");
        if (e.token_span && e.token_span->start >= e.token_span->end)
            throw TraceParseError(i + 1, "empty token span");
    }
}

std::vector<ReuseLabel> extract_reuse_labels(const std::vector<AccessEvent>& events) {
    std::vector<ReuseLabel> out;
    std::unordered_set<BlockId> seen;
    for (const auto& e : events) {
        if (e.kind != EventKind::block_access) continue;
        const bool reused = !seen.insert(e.block_id).second;
        out.push_back({e.sequence, e.block_id, e.block_type, e.transition_type, reused});
    }
    return out;
}

// --- Conversation adapter -------------------------------------------------------

std::vector<AccessEvent> from_conversations(std::string_view json_text, std::uint32_t block_tokens,
                                            std::uint64_t bytes_per_token) {
    if (block_tokens == 0 || bytes_per_token == 0) throw std::invalid_argument("block size must be positive");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& ex) {
        throw TraceParseError(1, std::string("malformed conversation JSON: ") + ex.what());
    }
    if (!doc.is_array()) throw TraceParseError(1, "conversation file must be a JSON array");

    auto fnv = [](std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
        return h;
    };
    std::vector<AccessEvent> events;
    std::map<std::uint64_t, std::vector<std::pair<BlockId, std::uint64_t>>> shared_system;
    BlockId next_id = 1;
    const SimTime step(10'000'000);
    for (std::size_t ci = 0; ci < doc.size(); ++ci) {
        const auto& conv = doc[ci];
        if (!conv.is_object() || !conv.contains("conversations") || !conv["conversations"].is_array())
            throw TraceParseError(ci + 1, "conversation entry lacks a 'conversations' array");
        const std::string sid = conv.contains("id") && conv["id"].is_string() ? conv["id"].get<std::string>()
                                                                                : session_name(static_cast<std::uint32_t>(ci));
        SimTime now(static_cast<std::int64_t>(ci) * 1'000'000'000);
        std::uint64_t cursor = 0;
        std::uint64_t order = 0;
        std::vector<AccessEvent> context;
        bool first = true;
        auto push = [&](BlockId id, BlockType type, TransitionType tr, TokenSpan span, std::uint64_t seed) {
            AccessEvent e;
            e.time = now;
            e.session_id = sid;
            e.block_id = id;
            e.block_type = type;
            e.transition_type = tr;
            e.position = cursor;
            e.size_bytes = span.length() * bytes_per_token;
            e.content_seed = seed;
            e.token_span = span;
            e.sequence = order++;
            events.push_back(e);
            now += step;
            return e;
        };
        for (const auto& msg : conv["conversations"]) {
            const std::string from = msg.value("from", "");
            const std::string value = msg.value("value", "");
            const std::uint64_t tokens = std::max<std::uint64_t>(1, (value.size() + 3) / 4);
            if (from == "system") {
                auto& ids = shared_system[fnv(value)];
                if (ids.empty()) {
                    for (std::uint64_t n : chunk(tokens, block_tokens)) ids.emplace_back(next_id++, n);
                }
                std::uint64_t k = 0;
                for (auto [id, n] : ids) {
                    TokenSpan span{cursor, cursor + n};
                    context.push_back(push(id, BlockType::system_prompt,
                                           first ? TransitionType::agent_handoff : TransitionType::reasoning_step,
                                           span, fnv(value) ^ k++));
                    cursor = span.end;
                }
            } else {
                const bool human = from == "human" || from == "user";
                if (human) {
                    for (const auto& c : context) {
                        AccessEvent again = c;
                        again.time = now;
                        again.transition_type = TransitionType::reasoning_step;
                        again.position = cursor;
                        again.sequence = order++;
                        events.push_back(again);
                        now += step;
                    }
                }
                std::uint64_t offset = 0;
                for (std::uint64_t n : chunk(tokens, block_tokens)) {
                    TokenSpan span{cursor, cursor + n};
                    const auto seed = fnv(std::string_view(value).substr(offset * 4, n * 4));
                    auto e = push(next_id++, human ? BlockType::user_context : BlockType::intermediate_reasoning,
                                  TransitionType::reasoning_step, span, seed);
                    if (human) context.push_back(e);
                    cursor = span.end;
                    offset += n;
                }
            }
            first = false;
        }
    }
    std::stable_sort(events.begin(), events.end(), [](const AccessEvent& a, const AccessEvent& b) {
        return std::tie(a.time, a.session_id, a.sequence) < std::tie(b.time, b.session_id, b.sequence);
    });
    for (std::size_t i = 0; i < events.size(); ++i) events[i].sequence = i;
    return events;
}

}  // namespace kvtier
