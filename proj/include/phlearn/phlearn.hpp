#pragma once

#include "phlearn/equivalence.hpp"
#include "phlearn/error.hpp"
#include "phlearn/io.hpp"
#include "phlearn/learn.hpp"
#include "phlearn/linalg.hpp"
#include "phlearn/morphisms.hpp"
#include "phlearn/simulate.hpp"
#include "phlearn/symplectic.hpp"
#include "phlearn/synth.hpp"
#include "phlearn/systems.hpp"
#include "phlearn/types.hpp"
