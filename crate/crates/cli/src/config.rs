//! Flat `key = value` configuration files mapping onto the model
//! parameters. Unset keys keep their defaults; command-line overrides are
//! applied after the file.

use std::path::Path;

use settrack::models::{Mat2, ModelParams, Rect};

use crate::CliError;

/// Parse a configuration file into parameters, starting from `base`.
pub fn load_config(path: &Path, base: ModelParams) -> Result<ModelParams, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
    let mut params = base;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Data(format!(
                "{}:{}: expected `key = value`, got `{raw}`",
                path.display(),
                lineno + 1
            )));
        };
        apply_key(&mut params, key.trim(), value.trim()).map_err(|e| {
            CliError::Data(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
    }
    validate(&params)?;
    Ok(params)
}

/// Apply `key=value` overrides (the `--set` flags) on top of parameters.
pub fn apply_overrides(params: &mut ModelParams, overrides: &[String]) -> Result<(), CliError> {
    for item in overrides {
        let Some((key, value)) = item.split_once('=') else {
            return Err(CliError::Usage(format!(
                "--set expects key=value, got `{item}`"
            )));
        };
        apply_key(params, key.trim(), value.trim())
            .map_err(|e| CliError::Usage(format!("--set {item}: {e}")))?;
    }
    validate(params)?;
    Ok(())
}

pub fn validate(params: &ModelParams) -> Result<(), CliError> {
    params
        .validate()
        .map_err(|e| CliError::Data(format!("invalid parameters: {e}")))
}

fn apply_key(params: &mut ModelParams, key: &str, value: &str) -> Result<(), String> {
    let parse_f64 =
        |v: &str| -> Result<f64, String> { v.parse().map_err(|_| format!("bad number `{v}`")) };
    let parse_usize =
        |v: &str| -> Result<usize, String> { v.parse().map_err(|_| format!("bad count `{v}`")) };
    match key {
        "lambda" => params.birth_rate = parse_f64(value)?,
        "mu" => params.death_rate = parse_f64(value)?,
        "sigma_p" => params.dash_sigma = parse_f64(value)?,
        "nu" => params.false_rate = parse_f64(value)?,
        "xi" => params.miss_rate = parse_f64(value)?,
        "tau" => params.dt = parse_f64(value)?,
        "t_assign" => params.assign_threshold = parse_f64(value)?,
        "t_fm" => params.fm_threshold = parse_f64(value)?,
        "alpha0" => params.alpha0 = parse_f64(value)?,
        "beta0" => params.beta0 = parse_f64(value)?,
        "area_min" => params.bbox_area_min = parse_f64(value)?,
        "area_max" => params.bbox_area_max = parse_f64(value)?,
        "report_conf" => params.report_conf = parse_f64(value)?,
        "n_particles" => params.n_particles = parse_usize(value)?,
        "max_em_steps" => params.max_em_steps = parse_usize(value)?,
        "arena" => {
            let parts: Vec<f64> = value
                .split_whitespace()
                .map(parse_f64)
                .collect::<Result<_, _>>()?;
            if parts.len() != 4 {
                return Err("arena expects `x0 y0 x1 y1`".into());
            }
            params.arena = Rect::new(parts[0], parts[1], parts[2], parts[3]);
        }
        "sigma" => {
            let parts: Vec<f64> = value
                .split_whitespace()
                .map(parse_f64)
                .collect::<Result<_, _>>()?;
            params.obs_cov = match parts.len() {
                1 => Mat2::isotropic(parts[0]),
                3 => Mat2::new(parts[0], parts[1], parts[2]),
                _ => return Err("sigma expects `v` (isotropic) or `xx xy yy`".into()),
            };
        }
        other => return Err(format!("unknown parameter `{other}`")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_overrides() {
        let dir = std::env::temp_dir().join("settrack-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("config.txt");
        std::fs::write(
            &path,
            "# example\nlambda = 0.06\nmu=0.02\nn_particles = 64\narena = 0 0 10 8\nsigma = 0.25\n",
        )
        .unwrap();
        let params = load_config(&path, ModelParams::pets2009()).unwrap();
        assert_eq!(params.birth_rate, 0.06);
        assert_eq!(params.n_particles, 64);
        assert_eq!(params.arena, Rect::new(0.0, 0.0, 10.0, 8.0));
        assert_eq!(params.obs_cov, Mat2::isotropic(0.25));

        let mut params = params;
        apply_overrides(&mut params, &["xi=1.5".into()]).unwrap();
        assert_eq!(params.miss_rate, 1.5);

        let err = apply_overrides(&mut params, &["nope=1".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn rejects_malformed_lines_with_position() {
        let dir = std::env::temp_dir().join("settrack-config-test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.txt");
        std::fs::write(&path, "lambda 0.06\n").unwrap();
        let err = load_config(&path, ModelParams::pets2009()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn rejects_invalid_parameter_values() {
        let mut params = ModelParams::pets2009();
        let err = apply_overrides(&mut params, &["tau=0".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
