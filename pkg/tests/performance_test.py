"""
Performance test script for scalelab
Times the solver, the walker ensemble and the fractal scans at desk scale
"""

import os
import sys
import time

import psutil

# Add the parent directory to sys.path to allow importing from utils
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from utils.fields import Grid, PhysicalParams
from utils.fractal import geometric_ladder, scan_path_length
from utils.geodesics import (INITIAL_STREAM, NoiseSpec, create_ensemble, drift_fields, generate_fractal_paths,
                             sample_initial_positions, step_ensemble)
from utils.hydrodynamics import decompose
from utils.schrodinger import (GAUSSIAN_PACKET, HARMONIC, AnalyticState, CrankNicolsonSolver, PotentialSpec,
                               discrete_eigenstates, normalized)


def memory_mb():
    return psutil.Process(os.getpid()).memory_info().rss / (1024 * 1024)


def time_solver(params, n, steps=1000, dimension=1):
    """Crank-Nicolson steps per second on an n-point (or n x n) grid"""
    lower, upper = (-10.0,) * dimension, (10.0,) * dimension
    grid = Grid(lower, upper, (n,) * dimension)
    psi = normalized(AnalyticState(GAUSSIAN_PACKET, x0=(-1.0,) * dimension, sigma0=(1.0,) * dimension,
                                   k0=(1.0,) * dimension).evaluate(grid, params))
    solver = CrankNicolsonSolver(grid, PotentialSpec(HARMONIC), params, 1e-3)
    start_time = time.time()
    for _ in solver.iterate(psi, steps, steps):
        pass
    elapsed = time.time() - start_time
    print(f"  {'x'.join([str(n)] * dimension)} nodes: {steps / elapsed:.0f} steps/s")
    return elapsed


def time_walkers(params, walkers, threads, steps=100):
    """Walker steps per second for one ensemble in the oscillator ground state"""
    grid = Grid.uniform(-10, 10, 512)
    pot = PotentialSpec(HARMONIC)
    _, states = discrete_eigenstates(grid, pot, params)
    noise = NoiseSpec("gaussian", 2024)
    ensemble = create_ensemble(sample_initial_positions(states[0], walkers, noise.generator(INITIAL_STREAM)),
                               grid, noise, params, 0.0)
    drift, _ = drift_fields(decompose(states[0], params))
    start_time = time.time()
    for _ in range(steps):
        ensemble = step_ensemble(ensemble, drift, 0.01, threads)
    elapsed = time.time() - start_time
    print(f"  {walkers} walkers on {threads} thread(s): {walkers * steps / elapsed / 1e6:.2f} M walker-steps/s")
    return elapsed


def time_fractal_scan(params, paths, delta):
    """Path generation and one length scan"""
    start_time = time.time()
    generated = generate_fractal_paths(paths, 0.0, params, delta, 1.0, NoiseSpec("gaussian", 7))
    generated_time = time.time() - start_time
    scan_path_length(generated, geometric_ladder(delta, 8))
    scan_time = time.time() - start_time - generated_time
    print(f"  {paths} paths at delta={delta:g}: generate {generated_time:.3f}s, scan {scan_time:.3f}s, "
          f"rss {memory_mb():.0f} MB")
    return generated_time + scan_time


def run_performance_tests():
    """Run all performance tests"""
    params = PhysicalParams(m=1.0, D=0.5)
    print(f"Starting memory: {memory_mb():.0f} MB on {psutil.cpu_count()} CPUs")

    print("\nTest 1: Crank-Nicolson solver")
    for n in (512, 2048, 8192):
        time_solver(params, n)
    time_solver(params, 128, steps=200, dimension=2)

    print("\nTest 2: Walker ensemble")
    for threads in (1, 2, 4):
        time_walkers(params, 100_000, threads)

    print("\nTest 3: Fractal path scans")
    for delta in (1e-4, 1e-5):
        time_fractal_scan(params, 32, delta)

    print(f"\nPeak memory: {memory_mb():.0f} MB")
    print("Performance tests completed")


if __name__ == "__main__":
    run_performance_tests()
