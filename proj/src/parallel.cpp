#include "difw/parallel.hpp"

#include <cstdlib>
#include <stdexcept>

#include "difw/error.hpp"

namespace difw {

int default_threads() {
  const char* env = std::getenv("DIFW_THREADS");
  if (env == nullptr) return 1;
  try {
    const int n = std::stoi(env);
    return n > 0 ? n : 1;
  } catch (const std::exception&) {
    return 1;
  }
}

void rethrow_with_context(std::exception_ptr error, const std::string& context) {
  try {
    std::rethrow_exception(error);
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(context + ": " + e.what());
  } catch (const OutOfDomain& e) {
    throw OutOfDomain(context + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(context + ": " + e.what());
  } catch (const InternalError& e) {
    throw InternalError(context + ": " + e.what());
  } catch (const InvalidState& e) {
    throw InvalidState(context + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(context + ": " + e.what());
  }
}

}  // namespace difw
