use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{compute_resources, OrchestratorError, ResourceRequest};
use crate::config::RunConfig;

/// Stands in for the job id of the preceding run until submission.
pub const DEPENDENCY_PLACEHOLDER: &str = "__PREV_JOB_ID__";
pub const SUBMIT_SCRIPT: &str = "submit.sh";

fn quote(s: &str) -> String {
    if !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_./=:@%+,".contains(c))
    {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

/// The batch script for one run. A pure function of its arguments.
pub fn emit_sbatch(
    run: &RunConfig,
    res: &ResourceRequest,
    config_path: &str,
    after_previous: bool,
) -> String {
    let mut s = String::from("#!/bin/bash\n");
    let mut directive = |d: String| {
        writeln!(s, "#SBATCH {d}").unwrap();
    };
    directive(format!(
        "--job-name={}",
        quote(&format!("{}_{}", run.experiment_name, run.run_id))
    ));
    directive(format!("--nodes={}", res.nodes));
    directive("--ntasks=1".to_string());
    directive(format!("--cpus-per-task={}", res.cpus_per_task));
    directive(format!("--mem={}G", res.mem_gb));
    directive(format!("--time={}", res.walltime_hms()));
    let out = run
        .output_dir
        .join(&run.experiment_name)
        .join(format!("{}.%j.out", run.run_id));
    directive(format!("--output={}", quote(&out.to_string_lossy())));
    if let Some(p) = &run.slurm.partition {
        directive(format!("--partition={}", quote(p)));
    }
    if let Some(a) = &run.slurm.account {
        directive(format!("--account={}", quote(a)));
    }
    if after_previous {
        directive(format!("--dependency=afterok:{DEPENDENCY_PLACEHOLDER}"));
    }
    s.push_str("\nset -euo pipefail\n\n");
    writeln!(
        s,
        "exec {} run --config {} --run-id {}",
        run.slurm.harness_cmd,
        quote(config_path),
        quote(&run.run_id)
    )
    .unwrap();
    s
}

/// Scripts for every run, each depending on its predecessor, with their
/// file names.
pub fn emit_chain(
    runs: &[RunConfig],
    config_path: &str,
) -> Result<Vec<(String, String)>, OrchestratorError> {
    runs.iter()
        .enumerate()
        .map(|(i, run)| {
            let res = compute_resources(run)?;
            Ok((
                format!("{:03}_{}.sbatch", i + 1, run.run_id),
                emit_sbatch(run, &res, config_path, i > 0),
            ))
        })
        .collect()
}

fn submit_script(names: &[&str]) -> String {
    let mut s = String::from(
        "#!/bin/bash\n# Submits the runs in order; each starts only after the previous one succeeded.\n\
         # Relative paths in the scripts resolve against the directory this is run from.\n\
         set -euo pipefail\nhere=\"$(dirname \"$0\")\"\n\n",
    );
    for (i, name) in names.iter().enumerate() {
        if i == 0 {
            writeln!(s, "prev=$(sbatch --parsable \"$here\"/{})", quote(name)).unwrap();
        } else {
            writeln!(
                s,
                "prev=$(sed \"s/{DEPENDENCY_PLACEHOLDER}/${{prev%%;*}}/\" \"$here\"/{} | sbatch --parsable)",
                quote(name)
            )
            .unwrap();
        }
        s.push_str("echo \"submitted ");
        s.push_str(name);
        s.push_str(" as ${prev%%;*}\"\n");
    }
    s
}

/// Writes the scripts and a `submit.sh` that chains them.
pub fn write_chain(dir: &Path, scripts: &[(String, String)]) -> Result<(), OrchestratorError> {
    fs::create_dir_all(dir).map_err(OrchestratorError::io(dir))?;
    for (name, body) in scripts {
        let path = dir.join(name);
        fs::write(&path, body).map_err(OrchestratorError::io(&path))?;
    }
    let names: Vec<&str> = scripts.iter().map(|(n, _)| n.as_str()).collect();
    let path = dir.join(SUBMIT_SCRIPT);
    fs::write(&path, submit_script(&names)).map_err(OrchestratorError::io(&path))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let _ = fs::set_permissions(&path, fs::Permissions::from_mode(0o755));
    }
    Ok(())
}
