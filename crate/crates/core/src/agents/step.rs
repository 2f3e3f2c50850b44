use rand_chacha::ChaCha8Rng;

use super::{active_slots, uncertainty_scalars, write_target, Agent, AgentError, Arch, Bottleneck, Routing, WorkspaceState};
use crate::envs::{strong_lesion_route, CueWiring, ObsTensor, CUE_DIM};
use crate::numerics::{Bound, Graph, Tensor, Var, GRID_CHANNELS, GRID_SIDE};

/// Recurrent state carried between steps as graph handles.
#[derive(Debug, Clone)]
pub struct GraphState {
    pub h: Var,
    pub slots: Vec<Var>,
    pub occupied: Vec<bool>,
    pub active: usize,
}

impl GraphState {
    pub fn initial(agent: &Agent, g: &mut Graph, capacity_scale: f64) -> Self {
        let c = &agent.config;
        let h = g.constant_vec(vec![0.0; c.hidden]);
        let slots = (0..c.slots).map(|_| g.constant_vec(vec![0.0; c.slot_dim])).collect();
        Self {
            h,
            slots,
            occupied: vec![false; c.slots],
            active: active_slots(c.slots, capacity_scale),
        }
    }

    /// Rebuilds a state from values. With `slots_as_leaves` the slots are
    /// gradient-tracked leaves, so derivatives with respect to them can be read.
    pub fn import(g: &mut Graph, carrier: &[f64], ws: &WorkspaceState, slots_as_leaves: bool) -> Self {
        let h = g.constant_vec(carrier.to_vec());
        let slots = (0..ws.k)
            .map(|i| {
                let v = ws.slot(i).to_vec();
                if slots_as_leaves {
                    g.param_vec(v)
                } else {
                    g.constant_vec(v)
                }
            })
            .collect();
        Self {
            h,
            slots,
            occupied: ws.occupied.clone(),
            active: ws.active(),
        }
    }

    pub fn workspace(&self, g: &Graph, capacity_scale: f64) -> WorkspaceState {
        let d = g.value(self.slots[0]).len();
        let mut slots = Vec::with_capacity(self.slots.len() * d);
        for &s in &self.slots {
            slots.extend_from_slice(g.value(s));
        }
        WorkspaceState {
            k: self.slots.len(),
            d,
            slots,
            occupied: self.occupied.clone(),
            capacity_scale,
        }
    }
}

/// Evaluation-time manipulations for one step. Noise vectors are supplied
/// by the caller, which owns the random streams.
#[derive(Debug, Clone, Default)]
pub struct StepControl {
    /// Added to the 151-d observation embedding.
    pub embed_noise: Option<Vec<f64>>,
    /// Added to the carrier right after the recurrent update (persists).
    pub hidden_noise: Option<Vec<f64>>,
    /// `k * d` values added to the active slots after the write and before
    /// the read (persists in the slot state).
    pub slot_noise: Option<Vec<f64>>,
    /// Replaces the slot contents seen by the read (frozen-slot audits).
    pub frozen_slots: Option<Vec<f64>>,
    /// Replaces the self-latent (lesions); the rest of the pass is unchanged.
    pub z_override: Option<Vec<f64>>,
}

/// Graph handles produced by one step.
#[derive(Debug, Clone)]
pub struct StepVars {
    pub embed: Var,
    /// Recurrent carrier (A0: its feedforward hidden layer).
    pub core: Var,
    pub slots: Vec<Var>,
    pub flat: Option<Var>,
    /// Workspace/carrier readout logits.
    pub draft: Var,
    /// Logits the policy acts on.
    pub logits: Var,
    pub z_self: Option<Var>,
    pub confidence: Option<Var>,
    pub stim_prob: Option<Var>,
    pub wrote: Option<usize>,
}

impl Agent {
    /// One forward step. Updates `st` in place and returns the step's nodes.
    pub fn step(
        &self,
        g: &mut Graph,
        p: &Bound,
        st: &mut GraphState,
        obs: &ObsTensor,
        ctl: &StepControl,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<StepVars, AgentError> {
        let c = &self.config;
        let m = &self.m;
        let arch = c.arch;
        let (trunk_obs, _) = strong_lesion_route(obs, c.wiring, arch.has_workspace())?;

        let grid = g.constant(Tensor::new(vec![GRID_CHANNELS, GRID_SIDE, GRID_SIDE], trunk_obs.embed_grid())?);
        let task = g.constant_vec(trunk_obs.task_vec.to_vec());
        let mut embed = m.encoder.forward(g, p, grid, task)?;
        if let Some(noise) = &ctl.embed_noise {
            let n = g.constant_vec(noise.clone());
            embed = g.add(embed, n)?;
        }
        let cue = g.constant_vec(trunk_obs.cue.to_vec());
        let x = g.concat(&[embed, cue])?;

        let core = if let Some(gru) = &m.gru {
            let mut h = gru.step(g, p, x, st.h)?;
            if let Some(noise) = &ctl.hidden_noise {
                let n = g.constant_vec(noise.clone());
                h = g.add(h, n)?;
            }
            st.h = h;
            h
        } else {
            let trunk = m.trunk.as_ref().expect("feedforward trunk");
            let pre = trunk.forward(g, p, x)?;
            let mut h = g.relu(pre);
            if let Some(noise) = &ctl.hidden_noise {
                let n = g.constant_vec(noise.clone());
                h = g.add(h, n)?;
            }
            h
        };

        let mut wrote = None;
        let mut flat = None;
        let mut read_slots = st.slots.clone();
        if arch.has_workspace() {
            if obs.cue_present() {
                if let Some(i) = write_target(&st.occupied, st.active) {
                    let write_cue = if c.wiring == CueWiring::Dropped {
                        vec![0.0; CUE_DIM]
                    } else {
                        obs.cue.to_vec()
                    };
                    let wc = g.constant_vec(write_cue);
                    let win = g.concat(&[core, wc])?;
                    let pre = m.write.as_ref().expect("write layer").forward(g, p, win)?;
                    st.slots[i] = g.tanh(pre);
                    st.occupied[i] = true;
                    wrote = Some(i);
                }
            }
            if let Some(noise) = &ctl.slot_noise {
                for i in 0..st.active {
                    let n = g.constant_vec(noise[i * c.slot_dim..(i + 1) * c.slot_dim].to_vec());
                    st.slots[i] = g.add(st.slots[i], n)?;
                }
            }
            read_slots = st.slots.clone();
            if let Some(frozen) = &ctl.frozen_slots {
                read_slots = (0..c.slots)
                    .map(|i| g.constant_vec(frozen[i * c.slot_dim..(i + 1) * c.slot_dim].to_vec()))
                    .collect();
            }
            flat = Some(g.concat(&read_slots)?);
        }

        let readout_in = match arch {
            Arch::A0 | Arch::A1 | Arch::HotOnly => core,
            Arch::B1 | Arch::B2 => g.concat(&[core, flat.expect("workspace")])?,
            Arch::BcLinear | Arch::BcMlp | Arch::BcRandproj => {
                let f = flat.expect("workspace");
                let b = match m.bottleneck.as_ref().expect("bottleneck") {
                    Bottleneck::Linear(l) => l.forward(g, p, f)?,
                    Bottleneck::Mlp(mlp) => mlp.forward(g, p, f)?,
                };
                g.concat(&[core, b])?
            }
        };
        let draft = match dropout {
            Some(rng) if c.dropout > 0.0 => {
                let mut mask = |n: usize| self.dropout_mask(n, rng);
                m.readout.forward_with_dropout(g, p, readout_in, Some(&mut mask))?
            }
            _ => m.readout.forward(g, p, readout_in)?,
        };

        let (mut z_self, mut confidence, mut logits) = (None, None, draft);
        if arch.has_self_model() {
            let bcast = if arch.has_workspace() && st.active > 0 {
                let mut acc = read_slots[0];
                for &s in &read_slots[1..st.active] {
                    acc = g.add(acc, s)?;
                }
                g.scale(acc, 1.0 / st.active as f64)
            } else {
                g.constant_vec(vec![0.0; c.slot_dim])
            };
            let (ent, margin) = uncertainty_scalars(g.value(draft));
            let unc = g.constant_vec(vec![ent, margin]);
            let zin = g.concat(&[core, bcast, draft, unc])?;
            debug_assert_eq!(g.value(zin).len(), c.self_input_dim());
            let z = match &ctl.z_override {
                Some(v) => g.constant_vec(v.clone()),
                None => {
                    let pre = m.self_model.as_ref().expect("self model").forward(g, p, zin)?;
                    g.tanh(pre)
                }
            };
            let cpre = m.conf_head.as_ref().expect("confidence head").forward(g, p, z)?;
            confidence = Some(g.sigmoid(cpre));
            if c.routing == Routing::ZSelf {
                logits = m.self_policy.as_ref().expect("self policy").forward(g, p, z)?;
            }
            z_self = Some(z);
        }

        let stim_prob = match (&m.stim_probe, flat) {
            (Some(probe), Some(f)) => {
                let pre = probe.forward(g, p, f)?;
                Some(g.sigmoid(pre))
            }
            _ => None,
        };

        Ok(StepVars {
            embed,
            core,
            slots: read_slots,
            flat,
            draft,
            logits,
            z_self,
            confidence,
            stim_prob,
            wrote,
        })
    }
}
