#ifndef MODELFIT_VERSION_HPP
#define MODELFIT_VERSION_HPP

namespace modelfit {

inline constexpr const char* kVersion = "0.1.0";

} // namespace modelfit

#endif // MODELFIT_VERSION_HPP
