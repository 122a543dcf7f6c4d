#include "arks/errors.hpp"

#include <exception>

namespace arks {

void rethrow_with_context(const std::string& where) {
  try {
    throw;
  } catch (const ParseError& e) {
    throw ParseError(where + ": " + e.message(), e.line());
  } catch (const DivergenceError& e) {
    throw DivergenceError(where + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(where + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(where + ": " + e.what());
  } catch (const DomainError& e) {
    throw DomainError(where + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(where + ": " + e.what());
  } catch (const Error& e) {
    throw Error(where + ": " + e.what());
  }
}

}  // namespace arks
