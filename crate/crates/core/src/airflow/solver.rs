use nalgebra::{DMatrix, DVector};

use super::laws::TwoWayFlow;
use super::network::{AirflowNetwork, Endpoint};
use super::AirflowError;
use crate::model::SolverConfig;

/// Fixed-point passes per Picard restart.
const PICARD_PASSES: usize = 30;
/// Newton iterations without halving the residual before a Picard restart.
const STALL_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct AirflowSolution {
    /// Zone reference pressures, Pa.
    pub pressures: Vec<f64>,
    pub flows: Vec<TwoWayFlow>,
    pub iterations: usize,
    pub picard_restarts: usize,
    /// max |residual| over zones, kg/s.
    pub max_residual: f64,
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Splits zones into those whose pressure is solved for and those left at
/// zero; fails on a linked group with no pressure-dependent path outdoors.
fn unknown_zones(net: &AirflowNetwork) -> Result<Vec<usize>, AirflowError> {
    let n = net.zone_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for link in &net.links {
        if let (true, Endpoint::Zone(a), Endpoint::Zone(b)) = (link.pressure_dependent(), link.from, link.to) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut vented = vec![false; n];
    let mut linked = vec![false; n];
    for link in &net.links {
        for end in [link.from, link.to] {
            if let Endpoint::Zone(i) = end {
                let root = find(&mut parent, i);
                linked[root] = true;
                let outdoors = link.from == Endpoint::Exterior || link.to == Endpoint::Exterior;
                if outdoors && link.pressure_dependent() {
                    vented[root] = true;
                }
            }
        }
    }
    let mut unknowns = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        if vented[root] {
            unknowns.push(i);
        } else if linked[root] {
            return Err(AirflowError::UndeterminedPressure {
                zone: net.zone_ids[i].clone(),
            });
        }
    }
    Ok(unknowns)
}

struct Problem<'a> {
    net: &'a AirflowNetwork,
    unknowns: Vec<usize>,
}

impl Problem<'_> {
    fn residual(&self, p: &[f64]) -> DVector<f64> {
        let r = self.net.residuals(p);
        DVector::from_iterator(self.unknowns.len(), self.unknowns.iter().map(|&i| r[i]))
    }

    fn jacobian(&self, p: &mut [f64], r: &DVector<f64>, probe: f64) -> DMatrix<f64> {
        let m = self.unknowns.len();
        let mut j = DMatrix::zeros(m, m);
        for (k, &zone) in self.unknowns.iter().enumerate() {
            let saved = p[zone];
            p[zone] = saved + probe;
            let rp = self.residual(p);
            p[zone] = saved;
            j.set_column(k, &((rp - r) / probe));
        }
        j
    }

    /// Successive substitution with each link replaced by its secant
    /// conductance about the pressure difference where its flow vanishes.
    fn picard(&self, p: &mut [f64]) {
        let m = self.unknowns.len();
        let mut position = vec![usize::MAX; self.net.zone_count()];
        for (k, &z) in self.unknowns.iter().enumerate() {
            position[z] = k;
        }
        let index = |e: Endpoint| match e {
            Endpoint::Zone(i) if position[i] != usize::MAX => Some(position[i]),
            _ => None,
        };
        let reference = |e: Endpoint, p: &[f64]| match e {
            Endpoint::Zone(i) => p[i],
            Endpoint::Exterior => 0.0,
        };
        for _ in 0..PICARD_PASSES {
            let mut a = DMatrix::<f64>::zeros(m, m);
            let mut s = DVector::<f64>::zeros(m);
            for (l, link) in self.net.links.iter().enumerate() {
                let (from, to) = (index(link.from), index(link.to));
                if !link.pressure_dependent() {
                    let q = self.net.imposed[l];
                    if let Some(j) = to {
                        s[j] += q;
                    }
                    if let Some(i) = from {
                        s[i] -= q;
                    }
                    continue;
                }
                let x_star = self.net.zero_point(l);
                let d = reference(link.from, p) - reference(link.to, p);
                let dx = d - x_star;
                let g = if dx.abs() > 1e-6 {
                    self.net.link_flow(l, p).net() / dx
                } else {
                    let mut probe = p.to_vec();
                    let bump = 1e-6 - dx;
                    match link.from {
                        Endpoint::Zone(i) => probe[i] += bump,
                        Endpoint::Exterior => match link.to {
                            Endpoint::Zone(j) => probe[j] -= bump,
                            Endpoint::Exterior => {}
                        },
                    }
                    self.net.link_flow(l, &probe).net() / 1e-6
                };
                // flow = g·(P_from − P_to − x*)
                let g = g.max(1e-12);
                let fixed_from = if from.is_none() { reference(link.from, p) } else { 0.0 };
                let fixed_to = if to.is_none() { reference(link.to, p) } else { 0.0 };
                let constant = g * (fixed_from - fixed_to - x_star);
                if let Some(j) = to {
                    s[j] += constant;
                    a[(j, j)] -= g;
                    if let Some(i) = from {
                        a[(j, i)] += g;
                    }
                }
                if let Some(i) = from {
                    s[i] -= constant;
                    a[(i, i)] -= g;
                    if let Some(j) = to {
                        a[(i, j)] += g;
                    }
                }
            }
            let Some(x) = a.lu().solve(&(-s)) else {
                return;
            };
            let mut change: f64 = 0.0;
            for (k, &z) in self.unknowns.iter().enumerate() {
                if x[k].is_finite() {
                    change = change.max((x[k] - p[z]).abs());
                    p[z] = x[k];
                }
            }
            if change < 1e-6 {
                return;
            }
        }
    }
}

/// Zone pressures zeroing every zone mass balance, starting from `initial`.
///
/// Converged when every residual is below the tolerance and the full Newton
/// step is below the pressure tolerance.
pub fn solve_pressures(
    net: &AirflowNetwork,
    config: &SolverConfig,
    initial: &[f64],
) -> Result<AirflowSolution, AirflowError> {
    if initial.iter().any(|x| !x.is_finite()) || net.imposed.iter().any(|x| !x.is_finite()) {
        return Err(AirflowError::NonFinite {
            what: "initial pressures or imposed flows".into(),
        });
    }
    let unknowns = unknown_zones(net)?;
    let mut p = vec![0.0; net.zone_count()];
    for &z in &unknowns {
        p[z] = initial[z];
    }
    let problem = Problem { net, unknowns };
    let finish = |p: Vec<f64>, iterations, restarts, residual| AirflowSolution {
        flows: net.flows(&p),
        pressures: p,
        iterations,
        picard_restarts: restarts,
        max_residual: residual,
    };
    if problem.unknowns.is_empty() {
        return Ok(finish(p, 0, 0, 0.0));
    }

    let mut r = problem.residual(&p);
    let mut norm = max_abs(&r);
    let mut iterations = 0;
    let mut restarts = 0;
    let mut increases = 0;
    let mut best = norm;
    let mut stalled = 0;
    loop {
        if iterations >= config.max_iterations {
            if norm < config.residual_tolerance {
                return Ok(finish(p, iterations, restarts, norm));
            }
            return Err(AirflowError::NonConvergence {
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        let jac = problem.jacobian(&mut p, &r, config.jacobian_probe);
        let step = jac.lu().solve(&(-&r)).filter(|dp| dp.iter().all(|x| x.is_finite()));
        let restart = match step {
            Some(dp) => {
                if norm < config.residual_tolerance && max_abs(&dp) < config.pressure_tolerance {
                    return Ok(finish(p, iterations, restarts, norm));
                }
                for (k, &z) in problem.unknowns.iter().enumerate() {
                    p[z] += config.relaxation * dp[k];
                }
                let new_r = problem.residual(&p);
                let new_norm = max_abs(&new_r);
                increases = if new_norm > norm { increases + 1 } else { 0 };
                r = new_r;
                norm = new_norm;
                if norm < 0.5 * best {
                    best = norm;
                    stalled = 0;
                } else {
                    stalled += 1;
                }
                // Forward differences across a zero-flow cusp can leave the
                // iterate oscillating without progress.
                let stagnant = stalled >= STALL_LIMIT && norm >= config.residual_tolerance && restarts < config.picard_restarts;
                increases >= 3 || !norm.is_finite() || stagnant
            }
            None => true,
        };
        if restart {
            stalled = 0;
            if restarts >= config.picard_restarts {
                return Err(AirflowError::Diverged {
                    restarts,
                    residual: norm,
                });
            }
            restarts += 1;
            increases = 0;
            if !p.iter().all(|x| x.is_finite()) {
                p.iter_mut().for_each(|x| *x = 0.0);
            }
            problem.picard(&mut p);
            log::debug!("pressure solver restarted from Picard pass {restarts}");
            r = problem.residual(&p);
            norm = max_abs(&r);
            best = norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airflow::{crack_flow, FlowLink, FlowLinkKind};
    use crate::model::Schedule;
    use proptest::prelude::*;

    fn crack(id: &str, from: Endpoint, to: Endpoint, k: f64, n: f64) -> FlowLink {
        FlowLink {
            id: id.into(),
            kind: FlowLinkKind::Crack {
                coefficient: k,
                exponent: n,
            },
            from,
            to,
            elevation: 0.0,
            azimuth: None,
        }
    }

    fn vmc(zone: usize) -> FlowLink {
        FlowLink {
            id: "vmc".into(),
            kind: FlowLinkKind::VmcExtract {
                schedule: Schedule::constant(0.01),
            },
            from: Endpoint::Zone(zone),
            to: Endpoint::Exterior,
            elevation: 0.0,
            azimuth: None,
        }
    }

    fn vmc_zone() -> AirflowNetwork {
        let mut net = AirflowNetwork::new(
            vec!["z".into()],
            vec![0.0],
            vec![crack("c", Endpoint::Exterior, Endpoint::Zone(0), 1e-3, 0.65), vmc(0)],
        );
        net.imposed[1] = 0.01;
        net
    }

    /// Bisection on a strictly decreasing scalar function.
    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn symmetric_facades_give_midpoint() {
        let mut net = AirflowNetwork::new(
            vec!["z".into()],
            vec![0.0],
            vec![
                crack("a", Endpoint::Exterior, Endpoint::Zone(0), 1e-3, 0.65),
                crack("b", Endpoint::Exterior, Endpoint::Zone(0), 1e-3, 0.65),
            ],
        );
        net.wind_pressures = vec![5.0, 0.0];
        let sol = solve_pressures(&net, &SolverConfig::default(), &[0.0]).unwrap();
        assert!((sol.pressures[0] - 2.5).abs() < 1e-9, "{}", sol.pressures[0]);
    }

    #[test]
    fn vmc_pressure_inverts_crack_law() {
        let sol = solve_pressures(&vmc_zone(), &SolverConfig::default(), &[0.0]).unwrap();
        let exact = -(0.01f64 / 1e-3).powf(1.0 / 0.65);
        assert!((sol.pressures[0] - exact).abs() < 1e-9 * exact.abs());
        assert!((exact + 34.55).abs() < 0.01);
        let net = vmc_zone();
        let oracle = bisect(|p| net.residuals(&[p])[0], -1e3, 1e3);
        assert!((sol.pressures[0] - oracle).abs() < 1e-9);
        assert!(sol.max_residual < 1e-8);
    }

    proptest! {
        #[test]
        fn converges_from_any_initial_guess(p0 in -1e5..1e5f64) {
            let sol = solve_pressures(&vmc_zone(), &SolverConfig::default(), &[p0]).unwrap();
            let exact = -(0.01f64 / 1e-3).powf(1.0 / 0.65);
            prop_assert!((sol.pressures[0] - exact).abs() < 1e-8);
        }
    }

    fn chain(ks: [f64; 4], exterior: [f64; 2]) -> AirflowNetwork {
        let mut net = AirflowNetwork::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.0; 3],
            vec![
                crack("ea", Endpoint::Exterior, Endpoint::Zone(0), ks[0], 0.6),
                crack("ab", Endpoint::Zone(0), Endpoint::Zone(1), ks[1], 0.7),
                crack("bc", Endpoint::Zone(1), Endpoint::Zone(2), ks[2], 0.5),
                crack("ce", Endpoint::Zone(2), Endpoint::Exterior, ks[3], 0.8),
            ],
        );
        net.wind_pressures = vec![exterior[0], 0.0, 0.0, exterior[1]];
        net
    }

    /// Series chain: the same flow crosses every link. Outer bisection on
    /// the flow through the first link, inner bisections for each pressure.
    fn chain_oracle(net: &AirflowNetwork) -> Vec<f64> {
        let law = |l: usize, dp: f64| match net.links[l].kind {
            FlowLinkKind::Crack { coefficient, exponent } => crack_flow(coefficient, exponent, dp),
            _ => unreachable!(),
        };
        let (pe0, pe1) = (net.wind_pressures[0], net.wind_pressures[3]);
        let pressures_for = |pa: f64| {
            let q = law(0, pe0 - pa);
            let pb = bisect(|pb| law(1, pa - pb) - q, -1e4, 1e4);
            let pc = bisect(|pc| law(2, pb - pc) - q, -1e4, 1e4);
            (q, pb, pc)
        };
        let pa = bisect(
            |pa| {
                let (q, _, pc) = pressures_for(pa);
                // excess leaving through the last crack; decreasing in pa
                q - law(3, pc - pe1)
            },
            -1e4,
            1e4,
        );
        let (_, pb, pc) = pressures_for(pa);
        vec![pa, pb, pc]
    }

    #[test]
    fn three_zone_chain_matches_bisection() {
        let net = chain([2e-3, 1e-3, 3e-3, 1.5e-3], [12.0, -4.0]);
        let sol = solve_pressures(&net, &SolverConfig::default(), &[0.0; 3]).unwrap();
        let oracle = chain_oracle(&net);
        for (a, b) in sol.pressures.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!(sol.max_residual < 1e-8);
    }

    #[test]
    fn zone_order_is_irrelevant() {
        let net = chain([2e-3, 1e-3, 3e-3, 1.5e-3], [12.0, -4.0]);
        let base = solve_pressures(&net, &SolverConfig::default(), &[0.0; 3]).unwrap();
        // reverse the zone numbering
        let mut rev = net.clone();
        rev.zone_ids.reverse();
        for link in &mut rev.links {
            for end in [&mut link.from, &mut link.to] {
                if let Endpoint::Zone(i) = end {
                    *i = 2 - *i;
                }
            }
        }
        let sol = solve_pressures(&rev, &SolverConfig::default(), &[0.0; 3]).unwrap();
        for i in 0..3 {
            assert!((sol.pressures[2 - i] - base.pressures[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn undetermined_and_unlinked_zones() {
        let net = AirflowNetwork::new(
            vec!["a".into(), "b".into(), "free".into()],
            vec![0.0; 3],
            vec![crack("ab", Endpoint::Zone(0), Endpoint::Zone(1), 1e-3, 0.65)],
        );
        assert_eq!(
            solve_pressures(&net, &SolverConfig::default(), &[0.0; 3]).unwrap_err(),
            AirflowError::UndeterminedPressure { zone: "a".into() }
        );
        let net = AirflowNetwork::new(
            vec!["a".into(), "free".into()],
            vec![0.0; 2],
            vec![crack("ea", Endpoint::Exterior, Endpoint::Zone(0), 1e-3, 0.65)],
        );
        let sol = solve_pressures(&net, &SolverConfig::default(), &[3.0, 7.0]).unwrap();
        assert_eq!(sol.pressures[1], 0.0);
        let only_vmc = AirflowNetwork::new(vec!["z".into()], vec![0.0], vec![vmc(0)]);
        assert!(matches!(
            solve_pressures(&only_vmc, &SolverConfig::default(), &[0.0]),
            Err(AirflowError::UndeterminedPressure { .. })
        ));
    }

    #[test]
    fn stack_driven_opening_pair_balances() {
        // Warm zone a and cool zone b joined by a door; b leaks outdoors.
        let mut net = AirflowNetwork::new(
            vec!["a".into(), "b".into()],
            vec![0.0, 0.0],
            vec![
                FlowLink {
                    id: "door".into(),
                    kind: FlowLinkKind::LargeOpeningInterior {
                        width: 0.8,
                        height: 2.0,
                        discharge: 0.42,
                    },
                    from: Endpoint::Zone(0),
                    to: Endpoint::Zone(1),
                    elevation: 0.0,
                    azimuth: None,
                },
                crack("be", Endpoint::Zone(1), Endpoint::Exterior, 1e-3, 0.65),
            ],
        );
        net.set_densities(&[25.0, 20.0], 20.0);
        let sol = solve_pressures(&net, &SolverConfig::default(), &[0.0, 0.0]).unwrap();
        assert!(sol.max_residual < 1e-8);
        let door = sol.flows[0];
        assert!(door.forward > 0.01 && (door.forward - door.backward).abs() < 1e-8);
    }

    #[test]
    fn picard_pass_alone_approaches_solution() {
        let net = chain([2e-3, 1e-3, 3e-3, 1.5e-3], [12.0, -4.0]);
        let problem = Problem {
            net: &net,
            unknowns: vec![0, 1, 2],
        };
        let mut p = vec![0.0; 3];
        problem.picard(&mut p);
        let oracle = chain_oracle(&net);
        for (a, b) in p.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }
}
