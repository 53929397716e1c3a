use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::NutritionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Sedentary,
    Light,
    Moderate,
    Active,
    VeryActive,
}

impl Activity {
    pub const ALL: [Activity; 5] = [
        Activity::Sedentary,
        Activity::Light,
        Activity::Moderate,
        Activity::Active,
        Activity::VeryActive,
    ];

    pub fn multiplier(self) -> f64 {
        match self {
            Activity::Sedentary => 1.2,
            Activity::Light => 1.375,
            Activity::Moderate => 1.55,
            Activity::Active => 1.725,
            Activity::VeryActive => 1.9,
        }
    }
}

/// Published BMR regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BmrFormula {
    /// Original Harris-Benedict coefficients.
    Harris1918,
    /// Roza & Shizgal revision of Harris-Benedict.
    Roza1984,
    /// Mifflin-St Jeor.
    #[default]
    Mifflin1990,
}

impl BmrFormula {
    pub const ALL: [BmrFormula; 3] = [
        BmrFormula::Harris1918,
        BmrFormula::Roza1984,
        BmrFormula::Mifflin1990,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    /// Years, 1..=130.
    pub age: u32,
    pub sex: Sex,
    pub height_cm: f64,
    pub weight_kg: f64,
    pub activity: Activity,
    /// IANA zone name; the tracker resets at local midnight here.
    pub timezone: Tz,
    /// Formula used when no other is requested.
    #[serde(default)]
    pub formula: BmrFormula,
}

impl UserProfile {
    pub fn validate(&self) -> Result<(), NutritionError> {
        if !(1..=130).contains(&self.age) {
            return Err(NutritionError::InvalidProfile(
                "age must lie in [1, 130] years",
            ));
        }
        if !(self.height_cm > 0.0 && self.height_cm <= 300.0) {
            return Err(NutritionError::InvalidProfile(
                "height must lie in (0, 300] cm",
            ));
        }
        if !(self.weight_kg > 0.0 && self.weight_kg <= 500.0) {
            return Err(NutritionError::InvalidProfile(
                "weight must lie in (0, 500] kg",
            ));
        }
        Ok(())
    }
}

/// Basal metabolic rate in kcal/day.
pub fn compute_bmr(profile: &UserProfile, formula: BmrFormula) -> Result<f64, NutritionError> {
    profile.validate()?;
    let (w, h, a) = (profile.weight_kg, profile.height_cm, f64::from(profile.age));
    let bmr = match (formula, profile.sex) {
        (BmrFormula::Harris1918, Sex::Male) => 66.4730 + 13.7516 * w + 5.0033 * h - 6.7550 * a,
        (BmrFormula::Harris1918, Sex::Female) => 655.0955 + 9.5634 * w + 1.8496 * h - 4.6756 * a,
        (BmrFormula::Roza1984, Sex::Male) => 88.362 + 13.397 * w + 4.799 * h - 5.677 * a,
        (BmrFormula::Roza1984, Sex::Female) => 447.593 + 9.247 * w + 3.098 * h - 4.330 * a,
        (BmrFormula::Mifflin1990, sex) => {
            10.0 * w + 6.25 * h - 5.0 * a + if sex == Sex::Male { 5.0 } else { -161.0 }
        }
    };
    if bmr <= 0.0 {
        return Err(NutritionError::NonPositiveBmr(bmr));
    }
    Ok(bmr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalorieGoal {
    pub bmr: f64,
    pub multiplier: f64,
    /// Daily budget in kcal, `bmr * multiplier`.
    pub goal: f64,
    pub formula: BmrFormula,
}

pub fn compute_goal(
    profile: &UserProfile,
    formula: BmrFormula,
) -> Result<CalorieGoal, NutritionError> {
    let bmr = compute_bmr(profile, formula)?;
    let multiplier = profile.activity.multiplier();
    Ok(CalorieGoal {
        bmr,
        multiplier,
        goal: bmr * multiplier,
        formula,
    })
}
