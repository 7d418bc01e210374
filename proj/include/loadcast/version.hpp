#ifndef LOADCAST_VERSION_HPP
#define LOADCAST_VERSION_HPP

namespace loadcast {

inline constexpr const char* kVersion = "0.1.0";

} // namespace loadcast

#endif
