#include <catch2/catch_amalgamated.hpp>
#include "pdap/experiment.hpp"
