#pragma once

// Umbrella header.

#include <adjcheck/adjustment.hpp>
#include <adjcheck/chi_square.hpp>
#include <adjcheck/config.hpp>
#include <adjcheck/error.hpp>
#include <adjcheck/graph.hpp>
#include <adjcheck/inference.hpp>
#include <adjcheck/json_io.hpp>
#include <adjcheck/sem.hpp>
#include <adjcheck/simulation.hpp>
