//! Whole-agent checkpoint: configuration, observation normalization, all four
//! networks and both optimizer states in the hex-float text format.

use std::fmt::Write as _;

use super::{ActionScale, Actor, Agent, AgentConfig, Critic};
use crate::control::{ObservationConfig, Range};
use crate::error::Result;
use crate::neural::{write_f64_hex, AdamState, Mlp, TextReader};

fn hex_line(out: &mut String, tag: &str, values: &[f64]) {
    out.push_str(tag);
    for &v in values {
        out.push(' ');
        write_f64_hex(out, v);
    }
    out.push('\n');
}

fn opt_usize(v: Option<usize>) -> String {
    v.map_or_else(|| "-".to_string(), |n| n.to_string())
}

fn normalization_values(n: &ObservationConfig) -> Vec<f64> {
    let mut v = Vec::with_capacity(14);
    for r in [n.temp, n.irradiance, n.do_conc, n.q_dil, n.q_air, n.co2] {
        v.extend([r.min, r.max]);
    }
    v.extend([n.int_clip, n.setpoint]);
    v
}

impl Agent {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "agent v1 {}", self.obs_dim());
        let _ = writeln!(
            out,
            "sizes {} {} {} {} {} {} {}",
            c.batch_size,
            c.hidden_width,
            c.offline_epochs,
            c.finetune_epochs,
            c.imitation_epochs,
            opt_usize(c.updates_per_epoch),
            opt_usize(c.buffer_capacity)
        );
        hex_line(
            &mut out,
            "rates",
            &[c.gamma, c.tau, c.lr_critic, c.lr_actor, c.action_low, c.action_high, c.imitation_lr],
        );
        hex_line(&mut out, "normalization", &normalization_values(&self.normalization));
        for (tag, actor) in [("actor", &self.actor), ("actor-target", &self.actor_target)] {
            let _ = writeln!(out, "{tag}");
            actor.net.write_text(&mut out);
        }
        for (tag, critic) in [("critic", &self.critic), ("critic-target", &self.critic_target)] {
            let _ = writeln!(out, "{tag}");
            for net in critic.nets() {
                net.write_text(&mut out);
            }
        }
        let _ = writeln!(out, "actor-adam");
        self.actor_opt.write_text(&mut out);
        let _ = writeln!(out, "critic-adam");
        self.critic_opt.write_text(&mut out);
        out
    }

    pub fn from_text(text: &str) -> Result<Agent> {
        let mut r = TextReader::new(text);
        let head = r.expect("agent")?;
        if head.first() != Some(&"v1") {
            return Err(r.error("unsupported agent format version"));
        }
        let obs_dim: usize = r.parse(head.get(1), "observation size")?;

        let sizes = r.expect("sizes")?;
        if sizes.len() != 7 {
            return Err(r.error("`sizes` needs 7 fields"));
        }
        let opt = |r: &TextReader<'_>, i: usize, what: &str| -> Result<Option<usize>> {
            if sizes[i] == "-" {
                Ok(None)
            } else {
                r.parse(sizes.get(i), what).map(Some)
            }
        };
        let rates = r.hex_row("rates", 7)?;
        let config = AgentConfig {
            batch_size: r.parse(sizes.first(), "batch size")?,
            hidden_width: r.parse(sizes.get(1), "hidden width")?,
            offline_epochs: r.parse(sizes.get(2), "offline epochs")?,
            finetune_epochs: r.parse(sizes.get(3), "fine-tune epochs")?,
            imitation_epochs: r.parse(sizes.get(4), "imitation epochs")?,
            updates_per_epoch: opt(&r, 5, "updates per epoch")?,
            buffer_capacity: opt(&r, 6, "buffer capacity")?,
            gamma: rates[0],
            tau: rates[1],
            lr_critic: rates[2],
            lr_actor: rates[3],
            action_low: rates[4],
            action_high: rates[5],
            imitation_lr: rates[6],
        };
        config.validate().map_err(|e| r.error(e.to_string()))?;

        let n = r.hex_row("normalization", 14)?;
        let range = |i: usize| Range::new(n[2 * i], n[2 * i + 1]);
        let normalization = ObservationConfig {
            temp: range(0),
            irradiance: range(1),
            do_conc: range(2),
            q_dil: range(3),
            q_air: range(4),
            co2: range(5),
            int_clip: n[12],
            setpoint: n[13],
        };
        normalization.validate().map_err(|e| r.error(e.to_string()))?;

        let scale = config.scale();
        let read_actor = |r: &mut TextReader<'_>, tag: &str| -> Result<Actor> {
            r.expect(tag)?;
            let net = Mlp::read_text(r)?;
            if net.input_dim() != obs_dim || net.output_dim() != 1 {
                return Err(r.error(format!("{tag} has the wrong shape")));
            }
            Ok(Actor { net, scale })
        };
        let actor = read_actor(&mut r, "actor")?;
        let actor_target = read_actor(&mut r, "actor-target")?;
        let read_critic = |r: &mut TextReader<'_>, tag: &str| -> Result<Critic> {
            r.expect(tag)?;
            let critic = Critic {
                obs_branch: Mlp::read_text(r)?,
                action_branch: Mlp::read_text(r)?,
                head: Mlp::read_text(r)?,
                scale,
            };
            let width = critic.obs_branch.output_dim() + critic.action_branch.output_dim();
            if critic.obs_dim() != obs_dim
                || critic.action_branch.input_dim() != 1
                || critic.head.input_dim() != width
                || critic.head.output_dim() != 1
            {
                return Err(r.error(format!("{tag} has the wrong shape")));
            }
            Ok(critic)
        };
        let critic = read_critic(&mut r, "critic")?;
        let critic_target = read_critic(&mut r, "critic-target")?;
        if !actor.net.same_shape(&actor_target.net) || critic.block_lens() != critic_target.block_lens() {
            return Err(r.error("target networks do not match the main networks"));
        }

        r.expect("actor-adam")?;
        let actor_opt = AdamState::read_text(&mut r)?;
        r.expect("critic-adam")?;
        let critic_opt = AdamState::read_text(&mut r)?;
        let actor_lens: Vec<usize> = actor.net.param_slices().iter().map(|s| s.len()).collect();
        if actor_opt.block_lens() != actor_lens || critic_opt.block_lens() != critic.block_lens() {
            return Err(r.error("optimizer state does not match the networks"));
        }
        Ok(Agent { config, normalization, actor, critic, actor_target, critic_target, actor_opt, critic_opt })
    }

    pub fn action_scale(&self) -> ActionScale {
        self.config.scale()
    }
}
