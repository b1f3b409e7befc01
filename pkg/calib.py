"""Calibration probe for figure configs (dev only, not part of the package)."""
import time
import numpy as np
from slowmodes import *
from slowmodes.nma import NmaConfig, continue_modal_table, log_grid
from slowmodes.hbm import HarmonicConfig
from slowmodes.reference import reduced_beam_with_friction, modal_damping_matrix

# ---------- friction 2-DOF ----------
M = np.diag([0.02, 1.0])
K = np.array([[40.0, -40.0], [-40.0, 640.0]])
elements = [NonlinearElement(law=CoulombTanh(limit_force=1.0, smoothing=0.01), input_dof=0)]
cfg = NmaConfig(harmonic=HarmonicConfig(7), amplitude_grid=log_grid(1e-3, 50.0, 41))
base = MechanicalModel(mass=M, stiffness=K, elements=elements)
table = continue_modal_table(base, cfg)
om0 = table.omega0[0]
zeta = 0.002
Ct = 2 * zeta * om0 * M

def beat_freq(traj):
    a = traj.a
    idx = []
    for k in range(1, a.size - 1):
        if a[k] >= a[k-1] and a[k] > a[k+1] and a[k] > 0.3 * a.max():
            idx.append(k)
    if len(idx) < 2:
        return np.nan
    return 2 * np.pi / (traj.t[idx[1]] - traj.t[idx[0]])

for ratio in (0.90, 0.95):
    forcing = ForcingSpec(amplitude=(0.0, 1.5), program=ConstantFrequency(frequency=ratio * om0))
    rom = SlowFlowConfig(table, extra_damping=Ct, forcing=forcing)
    traj = integrate_slowflow(rom, rest_state(rom), t_end=80.0, n_output=8000)
    print(f"[fig09] ratio {ratio}: beat freq {beat_freq(traj):.3f} rad/s, steady a {traj.a[-1]:.4f}")

# ---------- fig10 sweep ----------
fhat10 = 1.0
forcing = ForcingSpec(amplitude=(0.0, fhat10), program=LinearSweep(start=0.0, rate=0.025))
rom = SlowFlowConfig(table, extra_damping=Ct, forcing=forcing)
t0 = time.perf_counter()
traj = integrate_slowflow(rom, rest_state(rom), t_end=1150.0, n_output=6000)
rom_time = time.perf_counter() - t0
resp = synthesize_response(table, traj, dofs=[1])
rom_up = resp.envelope_upper[:, 0]
i = int(np.argmax(rom_up))
print(f"[fig10] ROM: peak u2 {rom_up[i]:.4f} at t={traj.t[i]:.1f} (Omega {0.025*traj.t[i]:.2f}); rom {rom_time:.2f} s")

model10 = MechanicalModel(mass=M, stiffness=K, elements=elements, extra_damping=Ct, forcing=forcing)
t0 = time.perf_counter()
full = integrate_full(model10, FullState(u=np.zeros(2), v=np.zeros(2)), t_end=1150.0,
                      t_eval=np.linspace(0, 1150, 40000), rel_tol=1e-8, abs_tol=1e-10)
dir_time = time.perf_counter() - t0
env = extract_envelope(full, 1)
j = int(np.argmax(env.u_peaks))
print(f"[fig10] direct: peak u2 {env.u_peaks[j]:.4f} at t={env.t_peaks[j]:.1f}; direct {dir_time:.1f} s")
print(f"[fig10] peak err {(rom_up[i]/env.u_peaks[j]-1)*100:+.2f}%, time err {abs(traj.t[i]-env.t_peaks[j]):.1f} s "
      f"({abs(traj.t[i]-env.t_peaks[j])/env.t_peaks[j]*100:.2f}% of sweep-to-resonance)")

# ---------- beam ----------
beam, red = reduced_beam_with_friction()
cfgb = NmaConfig(harmonic=HarmonicConfig(5), amplitude_grid=log_grid(1e-6, 0.05, 33))
t0 = time.perf_counter()
tb = continue_modal_table(beam, cfgb)
print(f"[beam] table {tb.n_entries} entries in {time.perf_counter()-t0:.1f} s; "
      f"omega {tb.omega0[0]:.2f}->{tb.omega0[-1]:.2f}, delta max {tb.delta.max():.4f}")

# fig16a: autonomous decay, Ct=0, from a0 on the backbone
a0 = 5e-3
romb = SlowFlowConfig(tb)
trajb = integrate_slowflow(romb, SlowFlowState(a=a0, theta=0.0), t_end=2.0, n_output=3000)
respb = synthesize_response(tb, trajb, dofs=[0])
pt = synthesize_state(tb, a0, 0.0)
t0 = time.perf_counter()
fullb = integrate_full(beam, FullState(u=pt.u, v=pt.v, dahl=(0.0,)), t_end=2.0,
                       t_eval=np.linspace(0, 2.0, 20000), rel_tol=1e-9, abs_tol=1e-12)
dirb_time = time.perf_counter() - t0
envb = extract_envelope(fullb, 0)
rom_at = np.interp(envb.t_peaks, trajb.t, respb.envelope_upper[:, 0])
mask = envb.u_peaks > 0.1 * envb.u_peaks.max()
rel_l2 = np.linalg.norm(rom_at[mask] - envb.u_peaks[mask]) / np.linalg.norm(envb.u_peaks[mask])
print(f"[fig16a] decay rel L2 {rel_l2*100:.2f}% over {mask.sum()} peaks; direct {dirb_time:.1f} s")

# fig16b: flutter limit cycle
k_stuck = beam.base_stiffness.copy(); k_stuck[0, 0] += 1e6
ratios = np.array([-0.02, 0.01, 0.01, 0.01, 0.01, 0.01])
Cflut = modal_damping_matrix(beam.mass, k_stuck, ratios)
romf = SlowFlowConfig(tb, extra_damping=Cflut)
trajf = integrate_slowflow(romf, SlowFlowState(a=1e-5, theta=0.0), t_end=3.0, n_output=3000)
respf = synthesize_response(tb, trajf, dofs=[0])
print(f"[fig16b] ROM LC amplitude a={trajf.a[-1]:.5e}, u_tip={respf.envelope_upper[-1,0]:.5e}")
beam_f = MechanicalModel(mass=beam.mass, stiffness=beam.base_stiffness,
                         elements=beam.elements, extra_damping=Cflut)
pt0 = synthesize_state(tb, 1e-5, 0.0)
t0 = time.perf_counter()
fullf = integrate_full(beam_f, FullState(u=pt0.u, v=pt0.v, dahl=(0.0,)), t_end=3.0,
                       t_eval=np.linspace(0, 3.0, 30000), rel_tol=1e-9, abs_tol=1e-12)
print(f"[fig16b] direct {time.perf_counter()-t0:.1f} s")
envf = extract_envelope(fullf, 0)
lc_direct = np.mean(envf.u_peaks[envf.t_peaks > 2.5])
print(f"[fig16b] direct LC u_tip {lc_direct:.5e}; ROM err {(respf.envelope_upper[-1,0]/lc_direct-1)*100:+.2f}%")

# fig17: sweeps 50t and 500t
for rate, tag in ((50.0, "a-slow"), (500.0, "b-fast")):
    om_res = tb.omega0[0]
    t_end = 1.35 * om_res / rate
    forcing = ForcingSpec(amplitude=(100.0, 0, 0, 0, 0, 0), program=LinearSweep(start=0.0, rate=rate))
    roms = SlowFlowConfig(tb, forcing=forcing)
    trajs = integrate_slowflow(roms, rest_state(roms), t_end=t_end, n_output=4000)
    resps = synthesize_response(tb, trajs, dofs=[0])
    up = resps.envelope_upper[:, 0]
    i = int(np.argmax(up))
    beam_s = MechanicalModel(mass=beam.mass, stiffness=beam.base_stiffness,
                             elements=beam.elements, forcing=forcing)
    t0 = time.perf_counter()
    fulls = integrate_full(beam_s, FullState(u=np.zeros(6), v=np.zeros(6), dahl=(0.0,)),
                           t_end=t_end, t_eval=np.linspace(0, t_end, 30000),
                           rel_tol=1e-9, abs_tol=1e-12)
    dts = time.perf_counter() - t0
    envs = extract_envelope(fulls, 0)
    j = int(np.argmax(envs.u_peaks))
    print(f"[fig17{tag}] rate {rate}: ROM peak {up[i]:.4e} at t={trajs.t[i]:.3f}; "
          f"direct peak {envs.u_peaks[j]:.4e} at t={envs.t_peaks[j]:.3f} ({dts:.1f} s); "
          f"amp err {(up[i]/envs.u_peaks[j]-1)*100:+.2f}%, time err {abs(trajs.t[i]-envs.t_peaks[j])/envs.t_peaks[j]*100:.2f}%")
print("calibration done")
