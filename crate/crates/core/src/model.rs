//! The multi-graph, plan-conditioned prediction network.
//!
//! ```text
//! observed (N x 2 x T) --1x1--> Z (N x C x T)
//!   for each enabled graph: 2 x [ relu(A Z W) -> 3x1 temporal conv ]
//!   stack branches --1x1--> relu                         = F_graphs
//! plan (2 x T_pred) --1x1--> GRU scan -> C, replicated to N x C x T
//!   stack [F_graphs, plan] --1x1--> relu                 = F_fusion
//! per agent: encoder GRU over F_fusion[i], decoder GRU from the current
//!   position, emitting displacements accumulated onto that position.
//! ```
//!
//! Every learnable tensor lives in a [`ParamStore`] under a stable name, so
//! the parameter layout is a pure function of [`ModelConfig`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use crate::autograd::{GruVars, Tape, Var};
use crate::error::{Error, Result};
use crate::graphs::{normalize_adjacency, AdjacencySet, GraphKind};
use crate::params::ParamStore;
use crate::scene::{ego_center, Category, Sample, Vec2};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    /// Feature channels `C`.
    pub channels: usize,
    pub blocks_per_branch: usize,
    pub obs_points: usize,
    pub pred_points: usize,
    pub categories_decoded: Vec<Category>,
    /// Graph branches in stacking order.
    pub enabled_graphs: Vec<GraphKind>,
    pub planning_fusion: bool,
    pub category_specific_decoders: bool,
}

impl ModelConfig {
    /// Full model for mixed urban traffic.
    pub fn full(obs_points: usize, pred_points: usize) -> Self {
        Self {
            channels: 64,
            blocks_per_branch: 2,
            obs_points,
            pred_points,
            categories_decoded: vec![Category::Vehicle, Category::Pedestrian, Category::Bicyclist],
            enabled_graphs: GraphKind::ALL.to_vec(),
            planning_fusion: true,
            category_specific_decoders: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled_graphs.is_empty() {
            return Err(Error::Config("at least one graph must be enabled".into()));
        }
        let mut seen = self.enabled_graphs.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.enabled_graphs.len() {
            return Err(Error::Config("graph listed twice".into()));
        }
        if self.channels == 0 || self.blocks_per_branch == 0 || self.obs_points < 2 || self.pred_points == 0 {
            return Err(Error::Config("channels, blocks and horizons must be positive".into()));
        }
        if self.categories_decoded.is_empty() {
            return Err(Error::Config("no categories to decode".into()));
        }
        Ok(())
    }

    /// Decoder set names: one per decoded category, or a single shared one.
    pub fn decoder_keys(&self) -> Vec<String> {
        if self.category_specific_decoders {
            self.categories_decoded.iter().map(|c| c.as_str().to_string()).collect()
        } else {
            vec!["shared".to_string()]
        }
    }

    fn decoder_key(&self, c: Category) -> Option<String> {
        if !self.categories_decoded.contains(&c) {
            return None;
        }
        Some(if self.category_specific_decoders {
            c.as_str().to_string()
        } else {
            "shared".to_string()
        })
    }
}

const GRU_NAMES: [&str; 9] = ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"];

fn register_gru(store: &mut ParamStore, prefix: &str, cx: usize, ch: usize) -> Result<()> {
    for name in GRU_NAMES {
        let (shape, fan_in) = match name.as_bytes()[0] {
            b'w' => (vec![ch, cx], cx),
            b'u' => (vec![ch, ch], ch),
            _ => (vec![ch], ch),
        };
        store.register(&format!("{prefix}.{name}"), Tensor::zeros(&shape), fan_in)?;
    }
    Ok(())
}

/// Registers the (zeroed) parameter layout for `config`.
pub fn parameter_layout(config: &ModelConfig) -> Result<ParamStore> {
    config.validate()?;
    let c = config.channels;
    let mut s = ParamStore::new();
    s.register("embed.weight", Tensor::zeros(&[c, 2]), 2)?;
    s.register("embed.bias", Tensor::zeros(&[c]), 2)?;
    for kind in &config.enabled_graphs {
        for b in 0..config.blocks_per_branch {
            s.register(&format!("graph.{}.{b}.spatial", kind.as_str()), Tensor::zeros(&[c, c]), c)?;
            s.register(&format!("graph.{}.{b}.temporal", kind.as_str()), Tensor::zeros(&[c, c, 3]), 3 * c)?;
        }
    }
    let depth = config.enabled_graphs.len();
    s.register("graph_fusion.weight", Tensor::zeros(&[1, depth]), depth)?;
    s.register("graph_fusion.bias", Tensor::zeros(&[1]), depth)?;
    if config.planning_fusion {
        s.register("plan.embed.weight", Tensor::zeros(&[c, 2]), 2)?;
        s.register("plan.embed.bias", Tensor::zeros(&[c]), 2)?;
        register_gru(&mut s, "plan.gru", c, c)?;
        s.register("plan_fusion.weight", Tensor::zeros(&[1, 2]), 2)?;
        s.register("plan_fusion.bias", Tensor::zeros(&[1]), 2)?;
    }
    for key in config.decoder_keys() {
        register_gru(&mut s, &format!("decoder.{key}.encoder"), c, c)?;
        register_gru(&mut s, &format!("decoder.{key}.decoder"), 2, c)?;
        s.register(&format!("decoder.{key}.output.weight"), Tensor::zeros(&[2, c]), c)?;
        s.register(&format!("decoder.{key}.output.bias"), Tensor::zeros(&[2]), c)?;
    }
    Ok(s)
}

/// A sample in ego frame together with its normalized adjacency matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub sample: Sample,
    pub adjacency: AdjacencySet,
    /// `norm(E + I)` for each graph, indexed like [`GraphKind::ALL`].
    pub normalized: [Tensor; 4],
}

impl PreparedSample {
    /// Centres the sample on the ego and builds all four graphs.
    pub fn new(sample: &Sample, distance_threshold: f64, beta_degrees: f64) -> Result<Self> {
        sample.validate()?;
        let sample = ego_center(sample);
        let adjacency = AdjacencySet::build(&sample, distance_threshold, beta_degrees);
        Ok(Self::from_parts(sample, adjacency))
    }

    pub fn from_parts(sample: Sample, adjacency: AdjacencySet) -> Self {
        let normalized = GraphKind::ALL.map(|k| normalize_adjacency(adjacency.get(k)));
        Self {
            sample,
            adjacency,
            normalized,
        }
    }

    pub fn normalized(&self, kind: GraphKind) -> &Tensor {
        &self.normalized[kind as usize]
    }
}

/// Predicted trajectories, one optional row per agent (ego and undecoded
/// agents are `None`), in the prepared sample's ego frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub trajectories: Vec<Option<Vec<Vec2>>>,
}

impl Predictions {
    pub fn predicted_agents(&self) -> impl Iterator<Item = (usize, &[Vec2])> {
        self.trajectories
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.as_deref().map(|t| (i, t)))
    }
}

/// Parameters bound as leaves on one tape.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub vars: Vec<Var>,
    embed: (Var, Var),
    branches: Vec<(GraphKind, Vec<(Var, Var)>)>,
    graph_fusion: (Var, Var),
    plan: Option<PlanVars>,
    decoders: Vec<(String, DecoderVars)>,
}

#[derive(Debug, Clone, Copy)]
struct PlanVars {
    embed: (Var, Var),
    gru: GruVars,
    fusion: (Var, Var),
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderVars {
    pub encoder: GruVars,
    pub decoder: GruVars,
    pub output: (Var, Var),
}

fn lookup(store: &ParamStore, vars: &[Var], name: &str) -> Result<Var> {
    store
        .position(name)
        .map(|i| vars[i])
        .ok_or_else(|| Error::ParamMismatch(format!("`{name}` not registered")))
}

fn lookup_gru(store: &ParamStore, vars: &[Var], prefix: &str) -> Result<GruVars> {
    let g = |n: &str| lookup(store, vars, &format!("{prefix}.{n}"));
    Ok(GruVars {
        w_z: g("w_z")?,
        u_z: g("u_z")?,
        b_z: g("b_z")?,
        w_r: g("w_r")?,
        u_r: g("u_r")?,
        b_r: g("b_r")?,
        w_h: g("w_h")?,
        u_h: g("u_h")?,
        b_h: g("b_h")?,
    })
}

/// Network definition plus its current weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Registers all parameters and draws them from a generator seeded with `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut params = parameter_layout(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        params.init_uniform(&mut rng);
        Ok(Self { config, params })
    }

    pub fn with_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let mut layout = parameter_layout(&config)?;
        layout.load_from(&params.to_named())?;
        Ok(Self { config, params: layout })
    }

    /// Puts every parameter on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Result<BoundParams> {
        let vars: Vec<Var> = self.params.iter().map(|p| tape.param(p.value.clone())).collect();
        let s = &self.params;
        let l = |n: &str| lookup(s, &vars, n);
        let embed = (l("embed.weight")?, l("embed.bias")?);
        let mut branches = Vec::new();
        for &kind in &self.config.enabled_graphs {
            let blocks = (0..self.config.blocks_per_branch)
                .map(|b| {
                    Ok((
                        l(&format!("graph.{}.{b}.spatial", kind.as_str()))?,
                        l(&format!("graph.{}.{b}.temporal", kind.as_str()))?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            branches.push((kind, blocks));
        }
        let graph_fusion = (l("graph_fusion.weight")?, l("graph_fusion.bias")?);
        let plan = if self.config.planning_fusion {
            Some(PlanVars {
                embed: (l("plan.embed.weight")?, l("plan.embed.bias")?),
                gru: lookup_gru(s, &vars, "plan.gru")?,
                fusion: (l("plan_fusion.weight")?, l("plan_fusion.bias")?),
            })
        } else {
            None
        };
        let decoders = self
            .config
            .decoder_keys()
            .into_iter()
            .map(|key| {
                let d = DecoderVars {
                    encoder: lookup_gru(s, &vars, &format!("decoder.{key}.encoder"))?,
                    decoder: lookup_gru(s, &vars, &format!("decoder.{key}.decoder"))?,
                    output: (
                        l(&format!("decoder.{key}.output.weight"))?,
                        l(&format!("decoder.{key}.output.bias"))?,
                    ),
                };
                Ok((key, d))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundParams {
            vars,
            embed,
            branches,
            graph_fusion,
            plan,
            decoders,
        })
    }

    /// Agents that receive a prediction: every non-ego agent whose category
    /// has a decoder. A supervised agent without one is a routing error.
    pub fn decodable_agents(&self, sample: &Sample) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for i in 1..sample.agent_count() {
            match self.config.decoder_key(sample.categories[i]) {
                Some(_) => out.push(i),
                None if sample.is_supervised(i) => return Err(Error::Routing(sample.categories[i])),
                None => {}
            }
        }
        Ok(out)
    }

    fn check_sample(&self, sample: &Sample) -> Result<()> {
        if sample.obs_points() != self.config.obs_points || sample.pred_points() != self.config.pred_points {
            return Err(Error::shape(
                "sample horizons",
                &[sample.obs_points(), sample.pred_points()],
                &[self.config.obs_points, self.config.pred_points],
            ));
        }
        Ok(())
    }

    /// Records the full forward pass for `agents` and returns one
    /// `T_pred x 2` trajectory node per agent.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        prep: &PreparedSample,
        agents: &[usize],
    ) -> Result<Vec<(usize, Var)>> {
        let sample = &prep.sample;
        self.check_sample(sample)?;
        if agents.is_empty() {
            return Ok(Vec::new());
        }
        let z = embed_inputs(tape, sample, bound.embed)?;
        let mut branch_out = Vec::with_capacity(bound.branches.len());
        for (kind, blocks) in &bound.branches {
            let a = tape.constant(prep.normalized(*kind).clone());
            let mut h = z;
            for &(spatial, temporal) in blocks {
                h = graph_conv_block(tape, h, a, spatial, temporal)?;
            }
            branch_out.push(h);
        }
        let f_graphs = fuse_graph_features(tape, &branch_out, bound.graph_fusion)?;
        let f_fusion = match &bound.plan {
            Some(p) => {
                let enc = encode_plan(tape, &sample.ego_plan, p.embed, &p.gru)?;
                fuse_plan_features(tape, f_graphs, Some(enc), Some(p.fusion))?
            }
            None => fuse_plan_features(tape, f_graphs, None, None)?,
        };
        let mut out = Vec::with_capacity(agents.len());
        for &i in agents {
            let key = self
                .config
                .decoder_key(sample.categories[i])
                .ok_or(Error::Routing(sample.categories[i]))?;
            let dec = &bound
                .decoders
                .iter()
                .find(|(k, _)| *k == key)
                .expect("decoder registered for every key")
                .1;
            let start = sample.current(i).ok_or_else(|| Error::Data(format!("agent {i} absent at current frame")))?;
            let traj = cs_gru_decode(tape, f_fusion, i, start, self.config.pred_points, dec)?;
            out.push((i, traj));
        }
        Ok(out)
    }

    /// Forward pass without gradients.
    pub fn predict(&self, prep: &PreparedSample) -> Result<Predictions> {
        let agents = self.decodable_agents(&prep.sample)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape)?;
        let outs = self.forward(&mut tape, &bound, prep, &agents)?;
        let mut trajectories = vec![None; prep.sample.agent_count()];
        for (i, v) in outs {
            let d = tape.value(v).data();
            trajectories[i] = Some(d.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect());
        }
        Ok(Predictions { trajectories })
    }

    /// Records `prediction_loss` for one sample. `None` when it has no
    /// supervised agents.
    pub fn sample_loss(&self, tape: &mut Tape, bound: &BoundParams, prep: &PreparedSample) -> Result<Option<Var>> {
        let supervised = prep.sample.supervised_agents();
        for &i in &supervised {
            if self.config.decoder_key(prep.sample.categories[i]).is_none() {
                return Err(Error::Routing(prep.sample.categories[i]));
            }
        }
        let preds = self.forward(tape, bound, prep, &supervised)?;
        prediction_loss(tape, &preds, &prep.sample)
    }

    /// Mean of per-sample losses over the samples that have supervised agents,
    /// with gradients for every parameter (registration order).
    pub fn batch_loss_and_grads(&self, batch: &[&PreparedSample]) -> Result<Option<(f64, Vec<Option<Tensor>>)>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape)?;
        let mut losses = Vec::new();
        for prep in batch {
            if let Some(l) = self.sample_loss(&mut tape, &bound, prep)? {
                losses.push(l);
            }
        }
        if losses.is_empty() {
            return Ok(None);
        }
        let mut total = losses[0];
        for &l in &losses[1..] {
            total = tape.add(total, l)?;
        }
        let mean = tape.scale(total, 1.0 / losses.len() as f64);
        let value = tape.value(mean).item();
        let grads = tape.backward(mean)?;
        let g = bound.vars.iter().map(|&v| grads.get(v).cloned()).collect();
        Ok(Some((value, g)))
    }
}

/// Lifts observed coordinates to `N x C x T` features; masked frames are zero.
pub fn embed_inputs(tape: &mut Tape, sample: &Sample, (w, b): (Var, Var)) -> Result<Var> {
    let n = sample.agent_count();
    let t = sample.obs_points();
    let c = tape.shape(w)[0];
    let mut x = Tensor::zeros(&[n, 2, t]);
    let mut mask = Tensor::zeros(&[n, c, t]);
    for i in 0..n {
        for k in 0..t {
            if sample.obs_mask[i][k] {
                let p = sample.observed[i][k];
                x.set(&[i, 0, k], p.x);
                x.set(&[i, 1, k], p.y);
                for ch in 0..c {
                    mask.set(&[i, ch, k], 1.0);
                }
            }
        }
    }
    let x = tape.constant(x);
    let e = tape.pointwise_conv(x, w, Some(b), 1)?;
    let mask = tape.constant(mask);
    tape.mul(e, mask)
}

/// `relu(norm(E+I) Z W)` per frame, then the 3x1 temporal convolution.
pub fn graph_conv_block(tape: &mut Tape, z: Var, adjacency: Var, spatial: Var, temporal: Var) -> Result<Var> {
    let zs = tape.shape(z).to_vec();
    let an = tape.shape(adjacency).to_vec();
    if zs.len() != 3 || an != [zs[0], zs[0]] {
        return Err(Error::shape("graph_conv_block", &zs, &an));
    }
    let (n, c, t) = (zs[0], zs[1], zs[2]);
    let flat = tape.reshape(z, &[n, c * t])?;
    let mixed = tape.matmul(adjacency, flat)?;
    let mixed = tape.reshape(mixed, &[n, c, t])?;
    let lin = tape.pointwise_conv(mixed, spatial, None, 1)?;
    let act = tape.relu(lin);
    tape.temporal_conv(act, temporal)
}

/// Stacks branch outputs and mixes them with a 1x1 convolution and ReLU.
pub fn fuse_graph_features(tape: &mut Tape, branches: &[Var], (w, b): (Var, Var)) -> Result<Var> {
    let stacked = tape.stack(branches)?;
    let shape = tape.shape(stacked)[1..].to_vec();
    let mixed = tape.pointwise_conv(stacked, w, Some(b), 0)?;
    let mixed = tape.reshape(mixed, &shape)?;
    Ok(tape.relu(mixed))
}

/// 1x1 embedding of the planned positions followed by a GRU scan from a zero
/// state; returns the final hidden state (length `C`).
pub fn encode_plan(tape: &mut Tape, plan: &[Vec2], (w, b): (Var, Var), gru: &GruVars) -> Result<Var> {
    let tp = plan.len();
    let c = tape.shape(w)[0];
    let mut data = Vec::with_capacity(2 * tp);
    data.extend(plan.iter().map(|p| p.x));
    data.extend(plan.iter().map(|p| p.y));
    let x = tape.constant(Tensor::new(vec![2, tp], data)?);
    let emb = tape.pointwise_conv(x, w, Some(b), 0)?;
    let mut h = tape.constant(Tensor::zeros(&[c]));
    for k in 0..tp {
        let xt = tape.index_axis(emb, 1, k)?;
        h = tape.gru_cell(xt, h, gru)?;
    }
    Ok(h)
}

/// Replicates the plan encoding over agents and frames, stacks it with
/// `F_graphs` and fuses with a 1x1 convolution and ReLU. Without a plan the
/// result is `relu(F_graphs)`.
pub fn fuse_plan_features(
    tape: &mut Tape,
    f_graphs: Var,
    plan_encoding: Option<Var>,
    fusion: Option<(Var, Var)>,
) -> Result<Var> {
    let (Some(enc), Some((w, b))) = (plan_encoding, fusion) else {
        return Ok(tape.relu(f_graphs));
    };
    let shape = tape.shape(f_graphs).to_vec();
    if shape.len() != 3 || tape.shape(enc) != [shape[1]] {
        return Err(Error::shape("fuse_plan_features", &shape, tape.shape(enc)));
    }
    let rep = tape.broadcast(enc, shape[0], shape[2])?;
    let stacked = tape.stack(&[f_graphs, rep])?;
    let mixed = tape.pointwise_conv(stacked, w, Some(b), 0)?;
    let mixed = tape.reshape(mixed, &shape)?;
    Ok(tape.relu(mixed))
}

/// Encoder/decoder for one agent. Returns a `T_pred x 2` node of positions.
pub fn cs_gru_decode(
    tape: &mut Tape,
    f_fusion: Var,
    agent: usize,
    start: Vec2,
    pred_points: usize,
    vars: &DecoderVars,
) -> Result<Var> {
    let f_in = tape.index_axis(f_fusion, 0, agent)?;
    let (c, t) = (tape.shape(f_in)[0], tape.shape(f_in)[1]);
    let mut h = tape.constant(Tensor::zeros(&[c]));
    for k in 0..t {
        let x = tape.index_axis(f_in, 1, k)?;
        h = tape.gru_cell(x, h, &vars.encoder)?;
    }
    let mut pos = tape.constant(Tensor::from_vec(vec![start.x, start.y]));
    let mut steps = Vec::with_capacity(pred_points);
    for _ in 0..pred_points {
        h = tape.gru_cell(pos, h, &vars.decoder)?;
        let d = tape.matvec(vars.output.0, h)?;
        let d = tape.add(d, vars.output.1)?;
        pos = tape.add(pos, d)?;
        steps.push(pos);
    }
    tape.stack(&steps)
}

/// Mean squared Euclidean error (m^2) over supervised agents and their future
/// frames. `None` when no agent is supervised.
pub fn prediction_loss(tape: &mut Tape, predictions: &[(usize, Var)], sample: &Sample) -> Result<Option<Var>> {
    let mut terms = Vec::new();
    let mut frames = 0usize;
    for &(i, v) in predictions {
        if !sample.is_supervised(i) {
            continue;
        }
        let tp = sample.pred_points();
        let mut truth = Vec::with_capacity(2 * tp);
        let mut mask = Vec::with_capacity(2 * tp);
        for (p, &m) in sample.future[i].iter().zip(&sample.fut_mask[i]) {
            truth.extend([p.x, p.y]);
            mask.extend([f64::from(u8::from(m)); 2]);
            frames += usize::from(m);
        }
        let truth = tape.constant(Tensor::new(vec![tp, 2], truth)?);
        let mask = tape.constant(Tensor::new(vec![tp, 2], mask)?);
        let diff = tape.sub(v, truth)?;
        let diff = tape.mul(diff, mask)?;
        let sq = tape.mul(diff, diff)?;
        terms.push(tape.sum(sq));
    }
    if terms.is_empty() || frames == 0 {
        return Ok(None);
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    Ok(Some(tape.scale(total, 1.0 / frames as f64)))
}
