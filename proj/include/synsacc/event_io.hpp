#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "synsacc/common.hpp"
#include "synsacc/event_sim.hpp"

namespace synsacc::eventsim {

/// EVB1 container, bit-exact:
///   header (16 bytes): magic "EVB1" | width u16 LE | height u16 LE | count u64 LE
///   per event (13 bytes): t_us u64 LE | x u16 LE | y u16 LE | polarity u8 (1=ON, 0=OFF)
inline constexpr char kEvb1Magic[4] = {'E', 'V', 'B', '1'};

namespace detail {

template <typename T>
void put_le(std::string& buf, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
        buf.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        value |= static_cast<T>(p[i]) << (8 * i);
    return value;
}

}  // namespace detail

inline void write_evb1(const std::string& path, const EventStream& stream) {
    std::string buf;
    buf.reserve(16 + stream.events.size() * 13);
    buf.append(kEvb1Magic, 4);
    detail::put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(stream.width));
    detail::put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(stream.height));
    detail::put_le<std::uint64_t>(buf, stream.events.size());
    for (const Event& ev : stream.events) {
        detail::put_le<std::uint64_t>(buf, ev.t_us);
        detail::put_le<std::uint16_t>(buf, ev.x);
        detail::put_le<std::uint16_t>(buf, ev.y);
        buf.push_back(ev.polarity > 0 ? char(1) : char(0));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open event file for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("short write to event file: " + path);
}

inline EventStream read_evb1(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open event file: " + path);
    unsigned char header[16];
    in.read(reinterpret_cast<char*>(header), 16);
    if (in.gcount() != 16 || std::memcmp(header, kEvb1Magic, 4) != 0)
        throw DataError("not an EVB1 file: " + path);

    EventStream stream;
    stream.width = detail::get_le<std::uint16_t>(header + 4);
    stream.height = detail::get_le<std::uint16_t>(header + 6);
    const std::uint64_t count = detail::get_le<std::uint64_t>(header + 8);

    std::vector<unsigned char> payload(static_cast<std::size_t>(count) * 13);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
    if (in.gcount() != static_cast<std::streamsize>(payload.size()))
        throw DataError("truncated EVB1 payload: " + path);

    stream.events.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const unsigned char* p = payload.data() + i * 13;
        Event& ev = stream.events[i];
        ev.t_us = detail::get_le<std::uint64_t>(p);
        ev.x = detail::get_le<std::uint16_t>(p + 8);
        ev.y = detail::get_le<std::uint16_t>(p + 10);
        ev.polarity = p[12] ? std::int8_t(1) : std::int8_t(-1);
        if (ev.x >= stream.width || ev.y >= stream.height)
            throw DataError("EVB1 event out of sensor bounds in " + path);
    }
    char extra = 0;
    if (in.read(&extra, 1); in.gcount() != 0)
        throw DataError("trailing bytes after EVB1 payload: " + path);
    // The container does not carry a duration; recover a lower bound.
    stream.duration_us =
        stream.events.empty() ? 0 : stream.events.back().t_us + 1;
    return stream;
}

/// CSV interoperability export, header "t_us,x,y,p" with p 1=ON / 0=OFF.
inline void write_events_csv(const std::string& path, const EventStream& stream) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open csv for writing: " + path);
    out << "t_us,x,y,p\n";
    for (const Event& ev : stream.events)
        out << ev.t_us << ',' << ev.x << ',' << ev.y << ','
            << (ev.polarity > 0 ? 1 : 0) << '\n';
}

/// Accepts both the native 1/0 polarity column and the signed +1/-1 form.
inline EventStream read_events_csv(const std::string& path, int width = 0,
                                   int height = 0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty csv: " + path);
    // Tolerate a trailing \r from foreign writers.
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "t_us,x,y,p")
        throw DataError("unexpected csv header in " + path + ": " + line);

    EventStream stream;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        Event ev;
        long long t = 0, x = 0, y = 0, p = 0;
        char c1 = 0, c2 = 0, c3 = 0;
        std::istringstream ss(line);
        if (!(ss >> t >> c1 >> x >> c2 >> y >> c3 >> p) || c1 != ',' ||
            c2 != ',' || c3 != ',' || t < 0 || x < 0 || y < 0)
            throw DataError("bad csv row " + std::to_string(line_no) + " in " + path);
        if (p != 0 && p != 1 && p != -1)
            throw DataError("bad polarity on csv row " + std::to_string(line_no) +
                            " in " + path);
        ev.t_us = static_cast<std::uint64_t>(t);
        ev.x = static_cast<std::uint16_t>(x);
        ev.y = static_cast<std::uint16_t>(y);
        ev.polarity = p == 0 || p == -1 ? std::int8_t(-1) : std::int8_t(1);
        stream.events.push_back(ev);
    }
    stream.width = width;
    stream.height = height;
    for (const Event& ev : stream.events) {
        stream.width = std::max(stream.width, ev.x + 1);
        stream.height = std::max(stream.height, ev.y + 1);
    }
    stream.duration_us =
        stream.events.empty() ? 0 : stream.events.back().t_us + 1;
    return stream;
}

/// Dispatch on the magic bytes so callers accept either container.
inline EventStream read_events(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw DataError("cannot open event file: " + path);
    char magic[4] = {};
    probe.read(magic, 4);
    probe.close();
    if (std::memcmp(magic, kEvb1Magic, 4) == 0) return read_evb1(path);
    return read_events_csv(path);
}

}  // namespace synsacc::eventsim
